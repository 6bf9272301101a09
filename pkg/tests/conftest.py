import acceptance_log

_collected = {"acceptance": False}


def pytest_collection_modifyitems(items):
    _collected["acceptance"] = any(item.module.__name__ == "test_acceptance" for item in items)


def pytest_terminal_summary(terminalreporter):
    if not _collected["acceptance"]:
        return
    terminalreporter.section("acceptance criteria")
    for num, title in acceptance_log.CRITERIA.items():
        if num in acceptance_log.RESULTS:
            ok, detail = acceptance_log.RESULTS[num]
            terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")
        else:
            terminalreporter.write_line(f"criterion {num:2d}: FAIL  {title}  [did not complete]")
