"""
Tests for run configuration parsing and the worker-count precedence.
"""

import json
import logging

import pytest

from qpack.core.config import GHZ, MM, WORKERS_ENV, RunConfig, parse_config, resolve_workers
from qpack.core.errors import ConfigError


def test_empty_document_gives_defaults():
    config = parse_config("{}")
    assert config == RunConfig()
    params = config.package_params()
    assert params.cavity_dims == pytest.approx((16 * MM, 16 * MM, 7 * MM))
    assert params.chip_dims == pytest.approx((7 * MM, 7 * MM, 0.35 * MM))
    assert params.trace.slot == pytest.approx(0.25 * MM)
    assert config.cell() == pytest.approx((0.25 * MM, 0.25 * MM, 0.175 * MM))
    assert config.window == "decay"
    assert config.chip_window is None
    assert config.loss_bandwidth == 2 * GHZ
    assert params.gap_delta == 0.0
    assert params.wall_sigma == 4.5e9
    assert config.band() == (4 * GHZ, 8 * GHZ)
    assert config.sweep_deltas_mm[-1] == 3.8


def test_gap_delta_converted_to_metres():
    config = parse_config('{"gap_delta_mm": 3.8}')
    assert config.gap_delta_mm == 3.8
    assert config.package_params().gap_delta == pytest.approx(3.8e-3)
    assert config.package_params(1.0).gap_delta == pytest.approx(1e-3)


def test_type_mismatch_names_the_key():
    with pytest.raises(ConfigError) as info:
        parse_config('{"gap_delta_mm": "big"}')
    assert info.value.path == "gap_delta_mm"
    assert "gap_delta_mm" in str(info.value)
    assert info.value.exit_code == 2


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config('{"gap_delta": 1.0}')
    assert info.value.path == "gap_delta"
    with pytest.raises(ConfigError) as nested:
        parse_config({"trace": {"length": 7.0}})
    assert nested.value.path == "trace.length"


def test_invariants_checked_before_simulation():
    with pytest.raises(ConfigError):
        parse_config('{"gap_delta_mm": -1}')
    with pytest.raises(ConfigError):
        parse_config('{"chip_mm": [30, 5, 0.35]}')
    with pytest.raises(ConfigError):
        parse_config('{"sweep_deltas_mm": [0, 5.0]}')
    with pytest.raises(ConfigError):
        parse_config('{"band_ghz": [8, 4]}')
    with pytest.raises(ConfigError):
        parse_config('{"cell_mm": [0.5, 0.5]}')


def test_sweep_deltas_sorted():
    config = parse_config({"sweep_deltas_mm": [3.0, 0.0, 1.5]})
    assert config.sweep_deltas_mm == [0.0, 1.5, 3.0]


def test_source_and_grid_conversion():
    config = parse_config({"source": {"center_ghz": 10.0, "bandwidth_ghz": 16.0}, "cell_mm": [0.5, 0.5, 0.25]})
    source = config.source_spec("p2")
    assert source.kind == "port" and source.port == "p2"
    assert source.center_frequency == 10 * GHZ
    assert source.bandwidth == 16 * GHZ
    spec = config.grid_spec()
    assert spec.dims == (32, 32, 28)


def test_digest_is_stable_and_sensitive():
    a = parse_config("{}")
    b = parse_config(json.dumps({"gap_delta_mm": 0.0}))
    assert a.digest() == b.digest()
    assert parse_config('{"gap_delta_mm": 1.0}').digest() != a.digest()
    assert json.loads(a.canonical_json())["cavity_mm"] == [16.0, 16.0, 7.0]


def test_workers_precedence(monkeypatch):
    config = parse_config({"workers": 3})
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert resolve_workers(None, config) == 3
    monkeypatch.setenv(WORKERS_ENV, "5")
    assert resolve_workers(None, config) == 5
    assert resolve_workers(2, config) == 2
    monkeypatch.delenv(WORKERS_ENV)
    assert resolve_workers(None, RunConfig()) >= 1


def test_bad_worker_values(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "many")
    with pytest.raises(ConfigError) as info:
        resolve_workers(None, RunConfig())
    assert info.value.path == WORKERS_ENV
    with pytest.raises(ConfigError):
        resolve_workers(0, RunConfig())


def test_trace_keys_convert_to_metres():
    config = parse_config({"trace": {"slot_mm": 0.3, "coupling_gap_mm": 0.6, "coupling_length_mm": 1.0}})
    trace = config.package_params().trace
    assert trace.slot == pytest.approx(0.3 * MM)
    assert trace.coupling_gap == pytest.approx(0.6 * MM)
    assert trace.coupling_length == pytest.approx(1.0 * MM)
    with pytest.raises(ConfigError):
        parse_config({"trace": {"coupling_gap_mm": 0.3}})
    with pytest.raises(ConfigError):
        parse_config({"ground_margin_mm": 3.0})


def test_coarse_cell_is_warned_about(caplog):
    with caplog.at_level(logging.WARNING):
        parse_config("{}")
    assert not any("cells per wavelength" in r.getMessage() for r in caplog.records)
    caplog.clear()
    with caplog.at_level(logging.WARNING):
        parse_config({"cell_mm": [0.6, 0.6, 0.35], "post_mm": 1.0})
    assert any("cells per wavelength" in r.getMessage() for r in caplog.records)
