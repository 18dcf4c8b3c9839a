"""Collects one status line per acceptance criterion for the terminal summary."""

LINES: list = []


def record(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    LINES.append(line)
    print(line)
    return line
