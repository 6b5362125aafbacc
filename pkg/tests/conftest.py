import re

_CRITERION = re.compile(r"test_criterion_(\d+)")
_results = {}


def pytest_runtest_makereport(item, call):
    m = _CRITERION.search(item.name)
    if not m or call.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    if call.excinfo is not None:
        msg = str(call.excinfo.value).strip().splitlines()
        detail = (detail + " | " if detail else "") + (msg[0] if msg else call.excinfo.typename)
    _results[int(m.group(1))] = (call.excinfo is None, detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        ok, detail = _results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
