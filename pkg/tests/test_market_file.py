import json
from pathlib import Path

import pytest

from vr_sqvi.errors import ConfigError
from vr_sqvi.market_file import dump_market, load_market, market_from_dict, market_to_dict


def test_dump_and_load(tmp_path, example2_market):
    path = dump_market(example2_market.with_floors([2300.0, 1100.0]), tmp_path / "m.json")
    loaded = load_market(path)
    assert market_to_dict(loaded) == market_to_dict(example2_market.with_floors([2300.0, 1100.0]))
    assert loaded.name == "example2"


def test_multipliers_default_to_one(example1_market):
    data = market_to_dict(example1_market)
    del data["volume"]["multipliers"]
    assert market_from_dict(data).volume_multipliers.tolist() == [1.0] * 4


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d["volume"].pop("kind"), "volume.kind"),
        (lambda d: d["volume"].__setitem__("kind", "cubic"), "volume.kind"),
        (lambda d: d.__setitem__("prices", [70.0]), "prices"),
        (lambda d: d["bounds"]["upper"].__setitem__(0, [80.0, "x"]), "bounds.upper[0][1]"),
        (lambda d: d.__setitem__("organizations", 0), "organizations"),
        (lambda d: d.pop("costs"), "costs"),
        (lambda d: d.__setitem__("schema", "sqvi-market/9"), "schema"),
    ],
)
def test_field_errors(example1_market, mutate, field):
    data = market_to_dict(example1_market)
    mutate(data)
    with pytest.raises(ConfigError) as info:
        market_from_dict(data)
    assert info.value.field == field


def test_invalid_json_reports_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "organizations": 2,\n  "locations": \n}\n', encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        load_market(path)
    assert info.value.line == 4
    assert info.value.exit_code == 2


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_market(tmp_path / "absent.json")


def test_round_trip_is_plain_json(tmp_path, example1_market):
    path = dump_market(example1_market, tmp_path / "m.json")
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["schema"] == "sqvi-market/1"
    assert data["volume"]["kind"] == "affine"


def test_bundled_market_file():
    market = load_market(Path(__file__).parents[1] / "problems" / "example2_raised_floor.json")
    assert market.demand_floors.tolist() == [2450.0, 1100.0]
    assert market.volume_kind.value == "sqrt_affine"
