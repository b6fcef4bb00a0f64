import math

import numpy as np
import pytest

from shellscat.errors import ParameterError
from shellscat.estimate_bench import (
    BenchResult,
    BenchSpec,
    Family,
    Inequality,
    bench,
    carleman_operator,
    draw_field,
    endpoint_exponents,
    calibrated_chi,
    rows_to_csv,
    sweep_report,
)
from shellscat.funcspaces import ah_dual_norm, ah_norm, bourgain_norm
from shellscat.resolvent import ResolventSpec, conj_resolve_tau, resolve
from shellscat.spectral_core import ComplexField, make_grid


def quick(inequality, params, samples=6, **kw):
    kw.setdefault("N", 32)
    return BenchSpec(inequality, params, samples=samples, min_samples=1, **kw)


def test_endpoint_exponents():
    assert endpoint_exponents(3) == (6.0, 1.2)
    p, pp = endpoint_exponents(5)
    assert 1 / p + 1 / pp == pytest.approx(1.0)


def test_krs_endpoint_exponent_vanishes():
    p, pp = endpoint_exponents(3)
    assert (3 / 2) * (1 / pp - 1 / p) - 1 == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize(
    "kwargs, message",
    [
        (dict(inequality="krs", params=()), "empty"),
        (dict(inequality="krs", params=(16.0, 4.0)), "increasing"),
        (dict(inequality="krs", params=(4.0,), samples=10), "below"),
        (dict(inequality="krs", params=(4.0,), d=2), "d >= 3"),
        (dict(inequality="carleman", params=((100.0, 64.0),)), "side condition"),
        (dict(inequality="carleman", params=((600.0, 0.5),)), "at least 1"),
        (dict(inequality="trace", params=((4.0, 1.0),)), "pairs"),
        (dict(inequality="trace", params=(-4.0,)), "positive"),
    ],
)
def test_spec_rejections(kwargs, message):
    with pytest.raises(ParameterError, match=message):
        BenchSpec(**kwargs)


def test_spec_aggregates_errors():
    with pytest.raises(ParameterError) as err:
        BenchSpec("krs", (16.0, 4.0), samples=3, d=2)
    assert "increasing" in str(err.value) and "below" in str(err.value) and "d >= 3" in str(err.value)


def test_running_max_and_reproducibility():
    few = bench(quick("trace", (4.0, 16.0), samples=4))
    more = bench(quick("trace", (4.0, 16.0), samples=8))
    again = bench(quick("trace", (4.0, 16.0), samples=8))
    for a, b in zip(few.rows, more.rows):
        assert b["constant"] >= a["constant"]
    assert rows_to_csv(more.rows) == rows_to_csv(again.rows)
    assert all(r["witness"].startswith(f"{i}:") for i, r in enumerate(more.rows))


def test_witness_reproduces_constant():
    spec = quick("haberman", (8.0,), samples=5)
    row = bench(spec).rows[0]
    i, j = map(int, row["witness"].split(":"))
    f = draw_field(spec.family, spec.grid, 8.0, np.random.default_rng([spec.seed, i, j]), max_width=spec.max_width)
    lhs = spec.grid.lp_physical(f.values(), 6.0)
    assert lhs / bourgain_norm(f, 8.0, 0.5).value == row["constant"]


def test_ah_indicator_ratio_finite():
    g = make_grid(3, 4.0, 32)
    f = ComplexField.physical(g, (g.radius <= 1.0).astype(float))
    u = resolve(f, ResolventSpec(4.0, backend="green3d"))
    ratio = math.sqrt(4.0) * ah_dual_norm(u).value / ah_norm(f).value
    assert np.isfinite(ratio) and ratio > 0


def test_ht_local_single_mode_below_global_constant():
    spec = quick("ht_local", (16.0,), samples=8, chi="gaussian")
    result = bench(spec)
    g = spec.grid
    idx = (3, 20, 9)
    data = np.zeros(g.shape, complex)
    data[idx] = 1.0
    f = ComplexField.frequency(g, data)
    chi = np.exp(-0.5 * g.radius**2 / spec.radius**2)
    ratio = math.sqrt(16.0) * g.l2_physical(chi * f.values()) / bourgain_norm(f, 16.0, 0.5).value
    assert ratio < result.rows[0]["constant"]


def test_calibrated_chi_lower_bound():
    g = make_grid(3, 4.0, 32)
    chi, delta = calibrated_chi(g, 1.0)
    assert 0 < delta <= 1
    inside = chi[g.radius <= 1.0]
    assert inside.min() >= 0.5 * chi.max() - 1e-12


def test_carleman_operator_matches_conjugation():
    g = make_grid(3, 4.0, 64)
    tau, M = 2.0, 1.0
    u = np.exp(-0.5 * g.radius**2 / 0.3**2)
    z = g.coords()[-1]
    phi = tau * z + 0.5 * M * z**2
    inner = ComplexField.physical(g, np.exp(-phi) * u)
    lap = ComplexField.frequency(g, -g.xi_squared * inner.spectrum()).values()
    direct = np.exp(phi) * lap
    out = carleman_operator(ComplexField.physical(g, u), tau, M).values()
    ball = g.radius <= 1.5
    assert np.linalg.norm(out[ball] - direct[ball]) / np.linalg.norm(direct[ball]) < 1e-8


def test_carleman_fields_supported_in_ball():
    spec = quick("carleman", ((600.0, 64.0),), samples=2)
    f = draw_field(spec.family, spec.grid, 0.5 * spec.grid.nyquist, np.random.default_rng(0), support=spec.radius)
    assert np.all(f.values()[spec.grid.radius >= spec.radius] == 0)


@pytest.mark.parametrize("family", list(Family))
def test_draw_field_families(family):
    g = make_grid(3, 1.5, 32)
    f = draw_field(family, g, 4.0, np.random.default_rng(1))
    assert np.isfinite(f.values()).all() and np.abs(f.values()).max() > 0


def test_sweep_isometry_constant_one():
    g = make_grid(3, 4.0, 32)
    f = ComplexField.physical(g, np.exp(-g.radius**2) * (1 + g.coords()[0]))
    spec = quick("haberman", (8.0, 16.0, 32.0))
    result = BenchResult(spec)
    for tau in spec.params:
        ratio = bourgain_norm(conj_resolve_tau(f, tau), tau, 0.5).value / bourgain_norm(f, tau, -0.5).value
        result.rows.append({"inequality": "isometry", "param": tau, "constant": ratio, "witness": "0:0",
                            "samples": 1, "skipped": 0, "lhs": ratio, "rhs": 1.0})
    report = sweep_report(result)
    assert report["max_constant"] == pytest.approx(1.0, rel=1e-10)
    assert abs(report["slope"]) < 1e-10


def test_sweep_zero_sample_reason():
    result = BenchResult(quick("trace", (4.0, 16.0)))
    result.rows = [{"param": 4.0, "constant": math.nan, "samples": 0}, {"param": 16.0, "constant": math.nan, "samples": 0}]
    report = sweep_report(result)
    assert report["slope"] is None and report["reason"] == "no samples"


def test_sweep_single_point_reason():
    report = sweep_report(bench(quick("trace", (4.0,), samples=2)))
    assert report["slope"] is None and "two grid points" in report["reason"]


def test_resolvent_x_labelled_lower_bound():
    result = bench(quick("resolvent_x", (4.0,), samples=2))
    assert any("lower bound" in n for n in result.notes)
    assert result.rows[0]["constant"] > 0


def test_multiplication_decays():
    result = bench(quick("multiplication", (4.0, 16.0, 64.0)))
    consts = [r["constant"] for r in result.rows]
    assert all(b <= a for a, b in zip(consts, consts[1:]))
    assert sweep_report(result)["slope"] <= 0


def test_krs_cgo_ratio_finite():
    row = bench(quick("krs_cgo", (8.0,), samples=3)).rows[0]
    assert np.isfinite(row["constant"]) and row["constant"] > 0


def test_csv_layout():
    text = rows_to_csv(bench(quick("trace", (4.0,), samples=2)).rows)
    lines = text.splitlines()
    assert lines[0] == "inequality,param,constant,witness,samples,skipped,lhs,rhs"
    assert lines[1].startswith("trace,4.0,")
