"""One summary line per acceptance criterion, printed at the end of the run."""

LINES = []


def record(number, title, checks):
    """``checks`` is a list of ``(label, ok)``; returns whether all passed."""
    ok = all(c for _, c in checks)
    detail = "; ".join(f"{label}{'' if c else ' [x]'}" for label, c in checks)
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail}"
    LINES.append(line)
    print(line)
    return ok
