"""Shared store for acceptance verdicts, printed in the pytest terminal summary."""

RESULTS: list[str] = []


def record(criterion: int, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  criterion {criterion}: {detail}"
    RESULTS.append(line)
    print(line)
