import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        line, details = mod.RESULTS[key]
        terminalreporter.write_line(line)
        for d in details[:12]:
            terminalreporter.write_line("    " + d)
        if len(details) > 12:
            terminalreporter.write_line(f"    ... {len(details) - 12} more lines in the captured output")
