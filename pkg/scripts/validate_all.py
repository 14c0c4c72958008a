#!/usr/bin/env python3
"""
Validate output directories: CSV headers match the table schemas and data/meta.json documents every column.
"""

import os
import json
import sys

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT_DIR)

from hetwls.simlab import validate_tables  # noqa: E402

META_PATH = os.path.join(ROOT_DIR, 'data', 'meta.json')


def load_meta():
    """Load data/meta.json, returning (meta, errors)."""
    if not os.path.isfile(META_PATH):
        return None, [f"Missing meta.json: {META_PATH}"]
    try:
        with open(META_PATH, 'r', encoding='utf-8') as f:
            meta = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        return None, [f"meta.json parse error: {e}"]

    errors = []
    for field in ['title', 'description', 'tables']:
        if field not in meta:
            errors.append(f"Missing meta.json field '{field}'")
    return meta, errors


def main():
    print("=" * 60)
    print("Output Validation")
    print("=" * 60)

    dirs = sys.argv[1:] or [os.path.join(ROOT_DIR, 'output')]
    meta, all_errors = load_meta()
    all_warnings = []
    for e in all_errors:
        print(f"  ERROR: {e}")

    for output_dir in dirs:
        print(f"\nValidating: {output_dir}/")
        errors, warnings = validate_tables(output_dir, meta)

        if errors:
            all_errors.extend(errors)
            for e in errors:
                print(f"  ERROR: {e}")
        if warnings:
            all_warnings.extend(warnings)
            for w in warnings:
                print(f"  WARN:  {w}")
        if not errors and not warnings:
            print(f"  OK")

    print("\n" + "=" * 60)
    print(f"Summary: {len(all_errors)} errors, {len(all_warnings)} warnings")
    print("=" * 60)

    if all_errors:
        sys.exit(1)
    else:
        print("\nAll validations passed!")
        sys.exit(0)


if __name__ == '__main__':
    main()
