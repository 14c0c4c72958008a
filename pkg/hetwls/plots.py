"""
Figures for simulation and fitting reports.

Static figures are matplotlib SVGs on a fixed 800x500 canvas; the MAE curves
also get an interactive Plotly companion when plotly is installed.
"""

import io

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

try:
    import plotly.graph_objects as go
    from plotly.subplots import make_subplots
    PLOTLY_AVAILABLE = True
except ImportError:
    PLOTLY_AVAILABLE = False

# ============================================================================
# COLOR SCHEMES
# ============================================================================
METHOD_COLORS = {
    "M1": "#3498DB",      # Blue
    "M2": "#E74C3C",      # Red
    "OLS": "#7F8C8D",     # Gray
}

METHOD_LABELS = {
    "M1": "UVD-WLS (M1)",
    "M2": "MVD-WLS (M2)",
    "OLS": "OLS",
}

ACTUAL_COLOR = "#2C3E50"

# 800x500 SVG viewBox (SVG output is 72 units per inch)
FIGSIZE = (800 / 72, 500 / 72)
SVG_HASHSALT = 'hetwls'


def _style_axes(ax, xlabel, ylabel, title):
    ax.set_facecolor('#FAFAFA')
    ax.set_xlabel(xlabel, fontsize=11, fontweight='bold')
    ax.set_ylabel(ylabel, fontsize=11, fontweight='bold')
    ax.set_title(title, fontsize=12, fontweight='bold', pad=10)
    ax.grid(True, which='major', linestyle='-', alpha=0.3)


def mae_curve_figure(fig1: pd.DataFrame):
    """MAE against n, one panel per scenario, one line per method."""
    scenarios = list(dict.fromkeys(fig1['scenario']))
    fig, axes = plt.subplots(1, len(scenarios), figsize=FIGSIZE, squeeze=False)
    fig.patch.set_facecolor('white')

    for ax, scenario in zip(axes[0], scenarios):
        block = fig1[fig1['scenario'] == scenario]
        for method, group in block.groupby('method', sort=True):
            group = group.sort_values('n')
            ax.plot(group['n'], group['mae'], '-o', color=METHOD_COLORS.get(method, '#333'),
                    linewidth=2, markersize=6, markeredgecolor='white', label=METHOD_LABELS.get(method, method))
        _style_axes(ax, 'Sample size n', 'MAE of fitted y', f'Scenario {scenario}')
        ax.set_xticks(sorted(block['n'].unique()))
        ax.legend(loc='upper right', fontsize=8, framealpha=0.9)

    fig.suptitle('Prediction MAE by Sample Size', fontsize=14, fontweight='bold')
    fig.tight_layout()
    return fig


def fitted_overlay_figure(y, fitted: dict, title: str = 'Actual vs. Fitted Values'):
    """Actual responses as points, each method's fitted values as a line, by observation."""
    y = np.asarray(y, dtype=float)
    obs = np.arange(1, y.shape[0] + 1)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    fig.patch.set_facecolor('white')

    ax.scatter(obs, y, s=30, c=ACTUAL_COLOR, edgecolors='white', linewidths=0.8,
               zorder=3, label='Actual')
    for method, values in fitted.items():
        ax.plot(obs, np.asarray(values, dtype=float), '-', color=METHOD_COLORS.get(method, '#333'),
                linewidth=1.8, alpha=0.85, label=METHOD_LABELS.get(method, method))

    _style_axes(ax, 'Observation', 'Response', title)
    ax.legend(loc='best', fontsize=9, framealpha=0.9)
    fig.tight_layout()
    return fig


def cv_sse_figure(cv):
    """Test-half SSE per repeat, with the per-method means dashed."""
    repeats = np.arange(1, cv.repeats + 1)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    fig.patch.set_facecolor('white')

    for method, values, mean in (('M1', cv.sse_m1, cv.mean_sse_m1), ('M2', cv.sse_m2, cv.mean_sse_m2)):
        color = METHOD_COLORS[method]
        ax.plot(repeats, values, '-', color=color, linewidth=1.2, alpha=0.8,
                label=METHOD_LABELS[method])
        if np.isfinite(mean):
            ax.axhline(mean, linestyle='--', color=color, linewidth=2, alpha=0.6,
                       label=f'{method} mean = {mean:.4g}')

    _style_axes(ax, 'Repeat', 'Test-half SSE', 'Repeated 50/50 Split: Test SSE')
    ax.legend(loc='upper right', fontsize=8, framealpha=0.9)
    fig.tight_layout()
    return fig


def svg_bytes(fig) -> bytes:
    """Render a figure to SVG with stable element ids and no timestamp, then close it."""
    buf = io.BytesIO()
    with plt.rc_context({'svg.hashsalt': SVG_HASHSALT}):
        fig.savefig(buf, format='svg', facecolor='white', edgecolor='none',
                    metadata={'Date': None})
    plt.close(fig)
    return buf.getvalue()


def mae_interactive_html(fig1: pd.DataFrame) -> str:
    """Plotly version of mae_curve_figure as a standalone HTML page."""
    if not PLOTLY_AVAILABLE:
        raise RuntimeError("plotly is not installed")
    scenarios = list(dict.fromkeys(fig1['scenario']))
    fig = make_subplots(rows=1, cols=len(scenarios),
                        subplot_titles=[f'Scenario {s}' for s in scenarios])

    hover = (
        "<b>%{customdata[0]}</b><br>"
        "n = %{x}<br>"
        "MAE: %{y:.4f}<br>"
        "<extra></extra>"
    )

    for col, scenario in enumerate(scenarios, start=1):
        block = fig1[fig1['scenario'] == scenario]
        for method, group in block.groupby('method', sort=True):
            group = group.sort_values('n')
            fig.add_trace(go.Scatter(
                x=group['n'],
                y=group['mae'],
                mode='lines+markers',
                name=METHOD_LABELS.get(method, method),
                legendgroup=method,
                showlegend=(col == 1),
                line=dict(color=METHOD_COLORS.get(method, '#333'), width=3),
                marker=dict(size=9, line=dict(width=2, color='white')),
                customdata=[[METHOD_LABELS.get(method, method)]] * len(group),
                hovertemplate=hover,
            ), row=1, col=col)
        fig.update_xaxes(title_text='Sample size n', row=1, col=col)
    fig.update_yaxes(title_text='MAE of fitted y', row=1, col=1)

    fig.update_layout(
        title=dict(text='<b>Prediction MAE by Sample Size</b>', x=0.5),
        plot_bgcolor='#FAFAFA',
        paper_bgcolor='white',
        hovermode='closest',
        width=1100,
        height=500,
    )
    return fig.to_html(include_plotlyjs='cdn', full_html=True, div_id='fig1-mae')
