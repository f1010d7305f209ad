import numpy as np
import pytest

from affinetest import (
    DecompositionConfig,
    FieldParams,
    FunctionTable,
    Polynomial,
    RealTable,
    SelectionError,
    cleanup,
    conditional_expectation,
    density_index,
    distance,
    refine_step,
    represents,
    robust_refine,
    select_subcell,
    strong_decompose,
    subcell_conditions,
    super_decompose,
)
from affinetest.decompose import DecompositionResult, load_result, save_result
from affinetest.factor import PolynomialFactor, bias_certificate
from affinetest.gowers import gowers_norm
from affinetest import fixtures


def coord(p, n, i):
    return Polynomial.coordinate(p, n, i)


def test_refine_step_returns_none_for_measurable_slice():
    b = PolynomialFactor((coord(2, 4, 1),))
    slice_vals = coord(2, 4, 1).values().astype(float)
    f = RealTable(FieldParams(2, 4), slice_vals)
    assert refine_step(f, b, 1) is None


def test_refine_step_character_example():
    # centered (-1)^{x_1} on the trivial factor: appends x_1, index gain 1
    params = FieldParams(2, 3)
    f = RealTable(params, 1.0 - 2.0 * coord(2, 3, 1).values().astype(float))
    before = density_index([f], PolynomialFactor.trivial())
    refined = refine_step(f, PolynomialFactor.trivial(), 1)
    assert refined is not None and refined.complexity == 1
    assert refined.polys[0].linear_part() == (1, 0, 0)
    gain = density_index([f], refined) - before
    assert abs(gain - 1.0) < 1e-12


def test_refine_step_strictly_increases_index():
    for seed in range(8):
        f = fixtures.random_function(2, 4, 2, seed=seed).indicator_slice(1)
        b = PolynomialFactor.trivial()
        refined = refine_step(f, b, 2)
        if refined is None:
            continue
        assert density_index([f], refined) > density_index([f], b)


def test_robust_refine_trivial_cases():
    f = fixtures.random_function(2, 4, 2, seed=1)
    fs = f.slices()
    b = fixtures.linear_factor(2, 4, 1, seed=1)
    # gamma above the total index budget: nothing can be kept
    assert robust_refine(fs, b, 3.0, 1) == b
    measurable = f.with_values(1 + coord(2, 4, 2).values())
    b2 = PolynomialFactor((coord(2, 4, 2),))
    assert robust_refine(measurable.slices(), b2, 0.01, 1) == b2


def test_robust_refine_terminates_with_small_gains():
    f = fixtures.random_function(2, 4, 2, seed=5)
    fs = f.slices()
    trace = []
    out = robust_refine(fs, PolynomialFactor.trivial(), 0.05, 1, max_factor_size=40, trace=trace)
    steps = [t for t in trace if t["event"] == "robust_step"]
    assert len(steps) <= 40  # index bounded by R/gamma = 2/0.05
    assert all(t["gain"] >= 0.05 for t in steps)
    # no further single step of gain >= 0.05 exists
    for s in f.slices():
        cand = refine_step(s, out, 1)
        if cand is not None:
            assert density_index(fs, cand) - density_index(fs, out) < 0.05


def _verify_strong(f, res, d, eps=1e-9):
    fs = f.slices()
    for i in range(f.range_size):
        total = res.f1[i].values + res.f2[i].values + res.f3[i].values
        assert np.max(np.abs(total - fs[i].values)) <= eps
        ce = conditional_expectation(fs[i], res.factor_coarse)
        assert np.max(np.abs(res.f1[i].values - ce.values)) <= eps
        assert -eps <= res.f1[i].values.min() and res.f1[i].values.max() <= 1 + eps
        mid = res.f1[i].values + res.f3[i].values
        assert -eps <= mid.min() and mid.max() <= 1 + eps
        for t in (res.f2[i], res.f3[i]):
            assert -1 - eps <= t.values.min() and t.values.max() <= 1 + eps
        assert gowers_norm(res.f2[i], d + 1).value <= res.certificates.gowers_bound + eps
        assert res.f3[i].l2_norm() <= res.certificates.l2_bound + eps


def test_strong_decompose_measurable_base():
    params = FieldParams(2, 5)
    b0 = PolynomialFactor((coord(2, 5, 1),))
    f = FunctionTable(params, 2, 1 + coord(2, 5, 1).values())
    cfg = DecompositionConfig(degree=1, delta=0.2)
    res = strong_decompose(f, cfg, b0)
    assert res.certified
    assert max(np.abs(t.values).max() for t in res.f2) == 0
    assert max(np.abs(t.values).max() for t in res.f3) == 0
    assert res.factor_coarse.is_syntactic_refinement_of(b0)


def test_strong_decompose_vacuous_eta():
    f = fixtures.random_function(2, 5, 2, seed=2)
    cfg = DecompositionConfig(degree=1, delta=0.4, eta=1.0)
    res = strong_decompose(f, cfg)
    # eta = 1 is vacuous, so the inner factor equals B and f3 vanishes
    assert res.certified
    assert max(np.abs(t.values).max() for t in res.f3) == 0
    _verify_strong(f, res, 1)


def test_strong_decompose_contract_random():
    cfg = DecompositionConfig(
        degree=1, delta=0.2, eta=lambda c: 0.55 / (c + 1), max_factor_size=8
    )
    for seed in range(5):
        f = fixtures.random_function(2, 5, 2, seed=100 + seed)
        res = strong_decompose(f, cfg)
        assert res.certified
        _verify_strong(f, res, 1)


def test_strong_decompose_rejects_bad_inputs():
    f = fixtures.random_function(2, 4, 2, seed=1)
    with pytest.raises(ValueError):
        strong_decompose(f, DecompositionConfig(degree=2))  # degree >= p
    b0 = PolynomialFactor((Polynomial.from_monomials(3, 3, {(1, 1, 0): 1}),))
    g = fixtures.random_function(3, 3, 2, seed=1)
    with pytest.raises(ValueError):
        strong_decompose(g, DecompositionConfig(degree=1), b0)


def test_super_decompose_constant_function():
    params = FieldParams(2, 4)
    f = FunctionTable(params, 2, np.ones(16, dtype=np.int64))
    res = super_decompose(f, DecompositionConfig(degree=1, delta=0.3, zeta=0.2))
    assert res.certified
    assert res.factor_coarse.complexity == 0 and res.factor_fine.complexity == 0
    assert max(np.abs(t.values).max() for t in res.f2) == 0
    assert max(np.abs(t.values).max() for t in res.f3) == 0


def test_super_decompose_measurable_function():
    params = FieldParams(2, 5)
    f = FunctionTable(params, 2, 1 + coord(2, 5, 3).values())
    res = super_decompose(f, DecompositionConfig(degree=1, delta=0.3, zeta=0.2))
    assert res.certified
    assert max(np.abs(t.values).max() for t in res.f2) == 0
    assert max(np.abs(t.values).max() for t in res.f3) == 0


def test_super_decompose_layered_contract():
    f = fixtures.layered_table(2, 5, 0, deep_cells=3, quarter=True)
    cfg = DecompositionConfig(degree=1, delta=0.25, eta=0.08, zeta=0.3, max_factor_size=8)
    res = super_decompose(f, cfg)
    assert res.certified
    assert res.factor_fine.complexity > res.factor_coarse.complexity
    assert res.factor_fine.is_syntactic_refinement_of(res.factor_coarse)
    # representation literally re-verified, not trusted from the loop
    assert represents(f, res.factor_fine, res.factor_coarse, 0.3)
    assert res.certificates.bias_coarse.exhaustive
    assert res.certificates.bias_fine.exhaustive
    fs = f.slices()
    for i in range(2):
        total = res.f1[i].values + res.f2[i].values + res.f3[i].values
        assert np.max(np.abs(total - fs[i].values)) <= 1e-9
        ce = conditional_expectation(fs[i], res.factor_fine)
        assert np.max(np.abs(res.f1[i].values - ce.values)) <= 1e-9


def _degenerate_result(f):
    """Super result over measurable f, then a zero polynomial appended so the
    fine factor is a proper (but partition-trivial) refinement."""
    res = super_decompose(f, DecompositionConfig(degree=1, delta=0.3, zeta=0.25))
    fine = res.factor_fine.extend(Polynomial.zero(f.params.p, f.params.n))
    return DecompositionResult(
        factor_coarse=res.factor_coarse,
        factor_fine=fine,
        f1=res.f1,
        f2=res.f2,
        f3=res.f3,
        subcell=None,
        certificates=res.certificates,
        certified=res.certified,
    )


def test_select_subcell_degenerate_zero_extension():
    params = FieldParams(2, 5)
    f = FunctionTable(params, 2, 1 + coord(2, 5, 1).values())
    res = _degenerate_result(f)
    s = select_subcell(f, res, 0.3, 0.25, seed=0)
    assert s == (0,)  # the only nonempty subcell id
    ok_a, ok_b = subcell_conditions(f, res, (0,), 0.3, 0.25)
    assert ok_a and ok_b
    ok_a, ok_b = subcell_conditions(f, res, (1,), 0.3, 0.25)
    assert not ok_a  # empty subcells


def test_select_subcell_measurable_condition_b_everywhere():
    f = fixtures.layered_table(2, 5, 1, deep_cells=3, quarter=True)
    cfg = DecompositionConfig(degree=1, delta=0.25, eta=0.08, zeta=0.3, max_factor_size=8)
    res = super_decompose(f, cfg)
    extra = res.factor_fine.complexity - res.factor_coarse.complexity
    assert extra > 0
    accepted = 0
    for flat in range(2**extra):
        s = tuple((flat >> i) & 1 for i in range(extra))
        ok_a, ok_b = subcell_conditions(f, res, s, 0.25, 0.3)
        accepted += ok_a and ok_b
    assert accepted >= 2 ** (extra - 1)  # at least half per the selection bound


def test_select_subcell_requires_proper_refinement():
    f = fixtures.random_function(2, 4, 2, seed=3)
    res = super_decompose(f, DecompositionConfig(degree=1, delta=0.4, eta=1.0, zeta=0.2))
    assert res.factor_fine.complexity == res.factor_coarse.complexity
    with pytest.raises(ValueError):
        select_subcell(f, res, 0.4, 0.2)


def test_cleanup_identity_when_nothing_triggers():
    params = FieldParams(2, 5)
    f = FunctionTable(params, 2, 1 + coord(2, 5, 1).values())
    coarse = PolynomialFactor((coord(2, 5, 1),))
    fine = coarse.extend(coord(2, 5, 2))
    out = cleanup(f, coarse, fine, (0,), 0.3)
    assert np.array_equal(out.values, f.values)


def test_cleanup_minority_relabeled():
    # single cell (trivial factor), 3/32 minority below zeta = 0.2
    params = FieldParams(2, 5)
    vals = np.ones(32, dtype=np.int64)
    vals[:3] = 2
    f = FunctionTable(params, 2, vals)
    coarse = PolynomialFactor.trivial()
    fine = PolynomialFactor((Polynomial.zero(2, 5),))
    out = cleanup(f, coarse, fine, (0,), 0.2)
    assert np.all(out.values == 1)
    assert distance(f, out) == 3 / 32


def test_cleanup_two_cell_instance():
    # hand-built 16-point instance: cell x1=0 violates the frequency gap,
    # cell x1=1 is clean and untouched
    params = FieldParams(2, 4)
    x1 = coord(2, 4, 1).values()
    x2 = coord(2, 4, 2).values()
    vals = np.where(x1 == 0, np.where(x2 == 0, 1, 2), 1)
    f = FunctionTable(params, 2, vals)
    coarse = PolynomialFactor((coord(2, 4, 1),))
    fine = coarse.extend(coord(2, 4, 2))
    out = cleanup(f, coarse, fine, (0,), 0.3)
    # violating cell x1=0: |Pr[1|c]-Pr[1|(c,0)]| = |0.5-1| > 0.3, rewritten to 1
    assert np.all(out.values[x1 == 0] == 1)
    assert np.array_equal(out.values[x1 == 1], f.values[x1 == 1])


def test_cleanup_empty_subcell_is_hard_error():
    params = FieldParams(2, 4)
    f = fixtures.random_function(2, 4, 2, seed=9)
    coarse = PolynomialFactor((coord(2, 4, 1),))
    fine = coarse.extend(coord(2, 4, 1))  # duplicate: subcell ids (0,1),(1,0) empty
    with pytest.raises(RuntimeError):
        cleanup(f, coarse, fine, (1,), 0.2)


def test_cleanup_distance_bound_on_accepted_instances():
    zeta = 0.15
    checked = 0
    for seed in range(12):
        f = fixtures.layered_table(2, 5, seed, deep_cells=1, quarter=True)
        cfg = DecompositionConfig(degree=1, delta=0.25, eta=0.04, zeta=zeta, max_factor_size=8)
        res = super_decompose(f, cfg)
        if not (res.certified and res.factor_fine.complexity > res.factor_coarse.complexity):
            continue
        try:
            s = select_subcell(f, res, 0.25, zeta, seed=seed)
        except SelectionError:
            continue
        out = cleanup(f, res.factor_coarse, res.factor_fine, s, zeta)
        beta = 2**res.factor_coarse.complexity * res.certificates.bias_coarse.max_bias
        assert distance(f, out) <= (2 * f.range_size + 1 + beta) * zeta
        checked += 1
    assert checked >= 8


def test_result_save_load_round_trip(tmp_path):
    f = fixtures.layered_table(2, 5, 2, deep_cells=3, quarter=True)
    cfg = DecompositionConfig(degree=1, delta=0.25, eta=0.08, zeta=0.3, max_factor_size=8)
    res = super_decompose(f, cfg)
    save_result(res, tmp_path / "dec", f.params)
    back = load_result(tmp_path / "dec")
    assert back.factor_coarse == res.factor_coarse
    assert back.factor_fine == res.factor_fine
    assert back.certified == res.certified
    for a, b in zip(res.f3, back.f3):
        assert np.array_equal(a.values, b.values)
    assert back.certificates.gowers == res.certificates.gowers


def test_trace_records_steps():
    f = fixtures.random_function(2, 5, 2, seed=4)
    cfg = DecompositionConfig(degree=1, delta=0.2, eta=lambda c: 0.55 / (c + 1))
    res = strong_decompose(f, cfg)
    events = {t["event"] for t in res.trace}
    assert "robust_step" in events or "gowers_step" in events
