import json

import pytest

from vnthermo import protocol_io, protocols
from vnthermo.engine import run
from vnthermo.errors import ProtocolError, ProtocolParseError


@pytest.mark.parametrize("name", sorted(protocols.BUILTINS))
def test_builtin_round_trip(name):
    p = protocols.builtin(name)
    again = protocol_io.loads(protocol_io.dumps(p))
    assert again == p
    assert protocol_io.dumps(again) == protocol_io.dumps(p)


def test_random_protocol_round_trip_runs_identically():
    p = protocols.random_protocol(7, mode="no-collapse")
    again = protocol_io.loads(protocol_io.dumps(p))
    assert run(again).ledger == run(p).ledger


def test_file_round_trip(tmp_path):
    p = protocols.hs_cycle()
    path = tmp_path / "hs.json"
    protocol_io.dump(p, path)
    assert protocol_io.load(path) == p
    assert path.read_text().endswith("}\n")


def doc():
    return json.loads(protocol_io.dumps(protocols.szilard()))


def test_unknown_step_param_located():
    d = doc()
    d["steps"][2]["params"]["colour"] = "red"
    with pytest.raises(ProtocolParseError, match=r"\$\.steps\[2\]\.params.*colour"):
        protocol_io.from_dict(d)


def test_unknown_top_level_key():
    d = doc()
    d["author"] = "x"
    with pytest.raises(ProtocolParseError, match="author"):
        protocol_io.from_dict(d)


def test_missing_step_id():
    d = doc()
    del d["steps"][1]["id"]
    with pytest.raises(ProtocolParseError, match=r"\$\.steps\[1\].*'id'"):
        protocol_io.from_dict(d)


def test_unknown_kind():
    d = doc()
    d["steps"][1]["kind"] = "Teleport"
    with pytest.raises(ProtocolParseError, match="Teleport"):
        protocol_io.from_dict(d)


def test_bad_config_field():
    d = doc()
    d["config"]["speed"] = 3
    with pytest.raises(ProtocolParseError, match=r"\$\.config"):
        protocol_io.from_dict(d)


def test_json_syntax_error_reports_position():
    with pytest.raises(ProtocolParseError, match="line 1 column"):
        protocol_io.loads('{"name": "x",, }')


def test_semantic_error_is_validation_not_parse():
    d = doc()
    d["steps"][5]["params"]["apparatus"] = "nowhere"
    with pytest.raises(ProtocolError) as info:
        protocol_io.from_dict(d)
    assert not isinstance(info.value, ProtocolParseError)
