"""Collects one verdict line per acceptance criterion."""

LINES = []


def verdict(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
    LINES.append(line)
    print(line)
    return ok
