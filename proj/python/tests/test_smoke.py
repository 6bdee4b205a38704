import json
import math
import os
import pathlib

import numpy as np
import pytest

import oldroyd_nlg as on

CONFIGS = pathlib.Path(os.environ.get("OLDROYD_CONFIG_DIR", pathlib.Path(__file__).resolve().parents[2] / "configs"))


def small_config(scheme, k=0.01, t0=0.02, T=0.06):
    c = on.SchemeConfig()
    c.scheme = scheme
    c.k, c.t0, c.T = k, t0, T
    return c


def test_kernel_parameters():
    p = on.KernelParams.derive(2.0, 1.0, 1.0)
    assert p.mu == pytest.approx(1.0)
    assert p.gamma == pytest.approx(0.5)
    assert on.kernel_eval(p, 0.0) == pytest.approx(p.gamma)
    with pytest.raises(ValueError):
        on.KernelParams.derive(1.0, 1.0, 1.0)


def test_positivity_of_constant_history():
    val = on.positivity_quadrature([1.0] * 1001, 1.0, 1e-3)
    assert val == pytest.approx(math.exp(-1.0), rel=1e-5)


def test_rates():
    assert on.estimate_rates([1.0, 0.25, 0.0625], 2.0) == pytest.approx([2.0, 2.0])
    r = on.estimate_rates([1.0, 0.0, 0.25], 2.0)
    assert r[0] is None and r[1] is None
    assert on.fitted_order([1.0, 0.25, 0.0625], [2.0, 2.0]) == pytest.approx(2.0)


def test_cgm_and_nlg_runs():
    ctx = on.TwoLevelContext.build(2, 1)
    assert ctx.H == pytest.approx(2 * ctx.h)
    problem = on.Problem.manufactured("S1")
    cgm = on.run_cgm(ctx.fine, small_config(on.Scheme.CGM), problem)
    nlg = on.run_nlg(ctx, small_config(on.Scheme.NLG2), problem)
    assert isinstance(cgm.u[-1], np.ndarray)
    assert cgm.times[-1] == pytest.approx(0.06)
    assert nlg.stacked
    l2, h1 = on.snapshot_difference(cgm, cgm.index_of(0.06), nlg, nlg.index_of(0.06))
    assert 0.0 < l2 < 1e-2 and h1 > l2
    (t, e_l2, e_h1), = on.exact_errors(cgm, "S1", [0.06])
    assert t == pytest.approx(0.06) and 0 < e_l2 < e_h1
    d = on.diagnostics(cgm, ctx)
    assert len(d.z_norm) == len(cgm.times)
    assert min(d.indicator) > 0


def test_python_callables_as_data():
    level = on.Level.unit_square(4)
    problem = on.Problem(initial=lambda x, y: (0.0, 0.0), forcing=lambda x, y, t: (0.0, 0.0))
    tr = on.run_cgm(level, small_config(on.Scheme.CGM), problem)
    assert all(np.all(u == 0.0) for u in tr.u)


def test_unforced_energy_decreases():
    ctx = on.TwoLevelContext.build(2, 1)
    tr = on.run_nlg(ctx, small_config(on.Scheme.NLG1), on.Problem.manufactured("S2", unforced=True))
    assert on.diagnostics(tr).max_energy_increase <= 1e-10


def test_step_failure_is_mapped():
    level = on.Level.unit_square(4)
    c = small_config(on.Scheme.CGM)
    c.picard_maxit = 1
    c.convection = 50.0
    with pytest.raises(on.StepFailure):
        on.run_cgm(level, c, on.Problem.manufactured("S1"))


def test_invalid_config_raises_value_error():
    with pytest.raises(ValueError):
        on.normalize_config({"study": "galerkin-rates", "levels": [2, 4]})
    with pytest.raises(ValueError):
        on.normalize_config({"levels": [2, 4, 8], "unknown": 1})


def test_study_report_round_trip(tmp_path):
    cfg = {
        "study": "galerkin-rates",
        "levels": [2, 4, 8],
        "k": 0.01,
        "T": 0.06,
        "sample_times": [0.06],
        "output": {"json": str(tmp_path / "r.json"), "csv": str(tmp_path / "r.csv")},
        "checks": [{"metric": "l2_error", "min_order": 1.0, "scope": "fit"}],
    }
    r = on.run_study(cfg)
    assert r["all_checks_passed"]
    assert len(on.metric(r, "l2_error", 0.06)) == 3
    on_disk = json.loads((tmp_path / "r.json").read_text())
    assert [row["value"] for row in on_disk["rows"]] == [row["value"] for row in r["rows"]]
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "level,H,h,time,metric,value"
    assert r["provenance"]["config_hash"] == on.run_study(cfg)["provenance"]["config_hash"]


def test_subspace_constants():
    k = on.subspace_constants(2, 1)
    assert 0.0 < k["one_minus_rho"] < 1.0
    assert k["lambda_1"] > 2 * math.pi**2


def test_shipped_configs_are_valid():
    schema = json.loads((CONFIGS / "study.schema.json").read_text())
    jsonschema = pytest.importorskip("jsonschema")
    files = sorted(p for p in CONFIGS.glob("*.json") if p.name != "study.schema.json")
    assert files
    for p in files:
        data = json.loads(p.read_text())
        jsonschema.validate(data, schema)
        on.normalize_config(data)
