"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES = {}


def record(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    LINES[number] = line
    print(line, flush=True)
    return passed
