"""Collects one pass/fail line per acceptance criterion for the end-of-run summary."""

RESULTS = {}


def record(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    return ok
