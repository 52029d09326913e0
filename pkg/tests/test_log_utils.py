import io

from backend.errors import ConfigError, ContractViolation, LabError, require
from backend.log_utils import configure_logging, get_logger


def test_events_go_to_the_configured_stream():
    buf = io.StringIO()
    configure_logging("INFO", buf)
    get_logger("trainer").info("epoch finished", epoch=3, mean_mis=0.41)
    line = buf.getvalue()
    assert "epoch finished" in line
    assert "epoch=3" in line
    assert "module=trainer" in line


def test_level_filtering():
    buf = io.StringIO()
    configure_logging("WARNING", buf)
    log = get_logger("x")
    log.info("hidden")
    log.warning("shown")
    assert "hidden" not in buf.getvalue()
    assert "shown" in buf.getvalue()
    configure_logging("INFO")


def test_config_error_message_names_line_and_key():
    err = ConfigError("must be >= 1", key="policy.depth", line=4)
    assert str(err) == "line 4: policy.depth: must be >= 1"
    assert isinstance(err, LabError)


def test_require():
    require(True, "fine")
    try:
        require(False, "broken")
    except ContractViolation as e:
        assert str(e) == "broken"
        assert isinstance(e, ValueError)
    else:
        raise AssertionError("require did not raise")
