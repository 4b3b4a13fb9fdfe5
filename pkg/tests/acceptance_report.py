"""Shared pass/fail ledger for the acceptance suite.

Each acceptance test records one line here before asserting, so the
terminal summary shows every criterion's verdict even when some fail.
"""

RESULTS = []


def record(index, name, ok, detail=""):
    RESULTS.append((index, name, bool(ok), detail))


def lines():
    out = []
    for index, name, ok, detail in sorted(RESULTS):
        verdict = "PASS" if ok else "FAIL"
        suffix = f" -- {detail}" if detail else ""
        out.append(f"[ACCEPTANCE] {index}. {name}: {verdict}{suffix}")
    return out
