import numpy as np
import pytest

from tdimpute.chained import iterative_impute
from tdimpute.errors import ConfigError, DomainError
from tdimpute.imputers import ImputerSpec, flatten, forward_fill
from tdimpute.panel import PROV_FUSED, PROV_ITERATIVE, PROV_OBSERVED, build_mask
from tdimpute.tdi import (
    TdiSpec,
    WeightConfig,
    compute_availability,
    compute_deltas,
    compute_frequencies,
    multiple_impute,
    tdi_impute,
    weight,
)

from conftest import make_panel, random_panel

nan = np.nan
inf = np.inf


# ---------------------------------------------------------------------------
# delta / availability / frequency


def test_delta_zero_where_observed():
    panel = make_panel([[[1.0, 2.0]]], timestamps=[[5.0]])
    deltas = compute_deltas(panel, build_mask(panel))
    assert deltas[0].tolist() == [[0.0, 0.0]]


def test_delta_elapsed_hours():
    panel = make_panel([[[4.0], [nan]]], timestamps=[[2.0, 5.0]])
    deltas = compute_deltas(panel, build_mask(panel))
    assert deltas[0][1, 0] == 3.0


def test_delta_infinite_without_history():
    panel = make_panel([[[nan], [1.0]]], timestamps=[[0.0, 4.0]])
    deltas = compute_deltas(panel, build_mask(panel))
    assert deltas[0][0, 0] == inf
    assert deltas[0][1, 0] == 0.0


def brute_force_delta(timestamps, obs):
    t, d = obs.shape
    out = np.empty((t, d))
    for i in range(t):
        for j in range(d):
            if obs[i, j]:
                out[i, j] = 0.0
                continue
            earlier = [timestamps[q] for q in range(i) if obs[q, j]]
            out[i, j] = timestamps[i] - earlier[-1] if earlier else inf
    return out


def test_delta_agrees_with_backward_scan_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        panel = random_panel(rng)
        mask = build_mask(panel)
        deltas = compute_deltas(panel, mask)
        for p, m, dlt in zip(panel.patients, mask.entries, deltas):
            assert np.array_equal(dlt, brute_force_delta(p.timestamps, m))


def test_availability_values():
    panel = make_panel([[[1.0, 2.0], [nan, nan], [nan, 2.0]]])
    r = compute_availability(build_mask(panel))
    assert r[0].tolist() == [1.0, 0.0, 0.5]


def test_availability_three_of_thirty():
    vals = np.full((1, 30), nan)
    vals[0, :3] = 1.0
    panel = make_panel([vals])
    r = compute_availability(build_mask(panel))
    assert r[0][0] == pytest.approx(0.1)


def test_frequency_from_gaps():
    panel = make_panel([[[1.0], [2.0], [3.0]]], timestamps=[[0.0, 2.0, 4.0]])
    f = compute_frequencies(panel, build_mask(panel))
    assert f[0] == 0.5


def test_frequency_zero_when_no_gaps():
    panel = make_panel([[[1.0]], [[2.0]]], timestamps=[[0.0], [1.0]])
    f = compute_frequencies(panel, build_mask(panel))
    assert f[0] == 0.0


def test_frequency_pools_gaps_across_patients():
    panel = make_panel(
        [[[1.0], [1.0]], [[1.0], [1.0]]],
        timestamps=[[0.0, 1.0], [0.0, 3.0]],
    )
    f = compute_frequencies(panel, build_mask(panel))
    assert f[0] == 0.5  # pooled gaps {1, 3}, mean 2


def test_frequency_per_patient_averaging_flag():
    panel = make_panel(
        [[[1.0], [1.0], [1.0]], [[1.0], [1.0]]],
        timestamps=[[0.0, 1.0, 2.0], [0.0, 4.0]],
    )
    mask = build_mask(panel)
    pooled = compute_frequencies(panel, mask)
    per_patient = compute_frequencies(panel, mask, per_patient=True)
    assert pooled[0] == pytest.approx(1.0 / 2.0)  # gaps {1,1,4}
    assert per_patient[0] == pytest.approx(1.0 / 2.5)  # means {1,4}


# ---------------------------------------------------------------------------
# weight function


def test_weight_is_one_at_zero_elapsed():
    assert weight(0.7, 0.3, 0.0) == 1.0


def test_weight_hand_value():
    assert weight(0.5, 0.5, 4.0) == 0.5
    # with unit frequency/availability, 1h staleness splits 50/50:
    # 10 carried and 20 estimated fuse to 15
    w = weight(1.0, 1.0, 1.0)
    assert w == 0.5
    assert w * 10.0 + (1.0 - w) * 20.0 == 15.0


def test_weight_vanishes_at_infinity():
    assert weight(0.5, 0.5, inf) == 0.0
    assert weight(0.0, 0.0, inf) == 0.0  # defined corner: nothing to carry


def test_weight_one_when_rate_zero_and_finite_dt():
    assert weight(0.0, 0.5, 7.0) == 1.0
    assert weight(0.5, 0.0, 7.0) == 1.0


def test_weight_rejects_out_of_domain():
    with pytest.raises(DomainError):
        weight(-0.1, 0.5, 1.0)
    with pytest.raises(DomainError):
        weight(0.1, 1.5, 1.0)
    with pytest.raises(DomainError):
        weight(0.1, 0.5, -1.0)


def test_weight_exponential_family():
    cfg = WeightConfig(family="exponential")
    assert weight(1.0, 1.0, 0.0, cfg) == 1.0
    assert weight(1.0, 1.0, inf, cfg) == 0.0
    assert weight(1.0, 0.5, 2.0, cfg) == pytest.approx(np.exp(-1.0))


def test_weight_monotone_and_bounded_both_families():
    rng = np.random.default_rng(1)
    for family in ("reciprocal", "exponential"):
        cfg = WeightConfig(family=family)
        f = rng.uniform(0, 3, size=2500)
        r = rng.uniform(0, 1, size=2500)
        dt = rng.uniform(0, 50, size=2500)
        w = weight(f, r, dt, cfg)
        assert np.all((w >= 0) & (w <= 1))
        eps = 1e-3
        assert np.all(weight(f + eps, r, dt, cfg) <= w + 1e-12)
        assert np.all(weight(f, np.minimum(r + eps, 1.0), dt, cfg) <= w + 1e-12)
        assert np.all(weight(f, r, dt + eps, cfg) <= w + 1e-12)


def test_weight_config_validation():
    with pytest.raises(ConfigError):
        WeightConfig(family="linear")
    with pytest.raises(ConfigError):
        WeightConfig(family="constant", constant_value=1.5)


# ---------------------------------------------------------------------------
# fusion


def test_fusion_hand_case():
    # one patient, one variable observed at t=0, missing at t=1;
    # second variable fully observed so the row availability r = 0.5.
    # Arrange f = 1 by giving the variable unit gaps in a second patient.
    panel = make_panel(
        [
            [[10.0, 1.0], [nan, 1.0]],
            [[5.0, 1.0], [6.0, 1.0], [7.0, 1.0]],
        ],
        timestamps=[[0.0, 1.0], [0.0, 1.0, 2.0]],
    )
    mask = build_mask(panel)
    f = compute_frequencies(panel, mask)
    assert f[0] == 1.0
    r = compute_availability(mask)
    assert r[0][1] == 0.5
    result = tdi_impute(panel, mask, TdiSpec())
    # w = 1 / (1 + 1 * 0.5 * 1) = 2/3; fused = w*ff + (1-w)*iterative
    ff = forward_fill(panel).patients[0].values[1, 0]
    flat, _ = flatten(panel)
    it = iterative_impute(flat)[1, 0]
    expected = (2.0 / 3.0) * ff + (1.0 / 3.0) * it
    assert result.values.patients[0].values[1, 0] == pytest.approx(expected)
    assert result.weights[0][1, 0] == pytest.approx(2.0 / 3.0)
    assert result.provenance[0][1, 0] == PROV_FUSED


def test_cells_without_history_take_iterative_estimate_exactly():
    panel = make_panel([[[nan, 2.0], [1.0, 2.0]]])
    mask = build_mask(panel)
    result = tdi_impute(panel, mask, TdiSpec())
    flat, _ = flatten(panel)
    it = iterative_impute(flat)
    assert result.values.patients[0].values[0, 0] == it[0, 0]
    assert result.provenance[0][0, 0] == PROV_ITERATIVE


def test_observed_cells_pass_through():
    panel = make_panel([[[7.0, nan], [nan, 1.0]]])
    result = tdi_impute(panel)
    assert result.values.patients[0].values[0, 0] == 7.0
    assert result.provenance[0][0, 0] == PROV_OBSERVED


def test_constant_weight_families_recover_constituents():
    rng = np.random.default_rng(2)
    panel = random_panel(rng, n_patients=5, max_rows=10, n_vars=4)
    mask = build_mask(panel)
    it_spec = ImputerSpec(kind="iterative")

    ff_vals = forward_fill(panel)
    flat, _ = flatten(panel)
    it_flat = iterative_impute(flat, max_iter=it_spec.max_iter,
                               tol=it_spec.tol,
                               ridge_alpha=it_spec.ridge_alpha,
                               clip=it_spec.clip)

    as_ff = tdi_impute(panel, mask, TdiSpec(
        weight=WeightConfig(family="constant", constant_value=1.0)))
    as_it = tdi_impute(panel, mask, TdiSpec(
        weight=WeightConfig(family="constant", constant_value=0.0)))

    offset = 0
    for i, (p, m) in enumerate(zip(panel.patients, mask.entries)):
        ff = ff_vals.patients[i].values
        covered = ~m & np.isfinite(ff)
        uncovered = ~m & ~np.isfinite(ff)
        out_ff = as_ff.values.patients[i].values
        out_it = as_it.values.patients[i].values
        it_block = it_flat[offset:offset + p.n_rows]
        # constant 1: forward-fill wherever it has a value, bitwise
        assert np.array_equal(out_ff[covered], ff[covered])
        # constant 0: the chained estimate everywhere imputed, bitwise
        assert np.array_equal(out_it[~m], it_block[~m])
        # both fall back to the chained estimate where fill can't reach
        assert np.array_equal(out_ff[uncovered], it_block[uncovered])
        offset += p.n_rows


def test_fused_values_are_convex_combinations():
    rng = np.random.default_rng(3)
    for _ in range(10):
        panel = random_panel(rng, n_patients=4, max_rows=8, n_vars=3)
        mask = build_mask(panel)
        result = tdi_impute(panel, mask, TdiSpec())
        ff_panel = forward_fill(panel)
        flat, _ = flatten(panel)
        it_flat = iterative_impute(flat)
        offset = 0
        for i, (p, m) in enumerate(zip(panel.patients, mask.entries)):
            ff = ff_panel.patients[i].values
            out = result.values.patients[i].values
            it = it_flat[offset:offset + p.n_rows]
            fused = ~m & np.isfinite(ff)
            lo = np.minimum(ff[fused], it[fused])
            hi = np.maximum(ff[fused], it[fused])
            assert np.all(out[fused] >= lo - 1e-12)
            assert np.all(out[fused] <= hi + 1e-12)
            offset += p.n_rows


def test_output_complete_and_observed_preserving():
    rng = np.random.default_rng(4)
    panel = random_panel(rng, n_patients=6, max_rows=9, n_vars=4)
    mask = build_mask(panel)
    result = tdi_impute(panel, mask, TdiSpec())
    for p_in, p_out, m in zip(panel.patients, result.values.patients,
                              mask.entries):
        assert not np.isnan(p_out.values).any()
        assert np.array_equal(p_out.values[m], p_in.values[m])


def test_frequency_override_changes_weights():
    panel = make_panel(
        [[[10.0, 1.0], [nan, 1.0]]], timestamps=[[0.0, 1.0]]
    )
    mask = build_mask(panel)
    res_native = tdi_impute(panel, mask, TdiSpec())
    res_forced = tdi_impute(panel, mask, TdiSpec(),
                            frequencies=np.array([100.0, 100.0]))
    w_native = res_native.weights[0][1, 0]
    w_forced = res_forced.weights[0][1, 0]
    assert w_forced < w_native


def test_spec_requires_iterative_kind():
    with pytest.raises(ConfigError):
        TdiSpec(iterative=ImputerSpec(kind="mean"))


# ---------------------------------------------------------------------------
# multiple imputation


def test_multiple_impute_needs_m_of_two():
    panel = make_panel([[[1.0, nan], [nan, 2.0]]])
    with pytest.raises(ConfigError):
        multiple_impute(panel, None, TdiSpec(), m=1)


def test_multiple_impute_summary_matches_recomputation():
    rng = np.random.default_rng(5)
    panel = random_panel(rng, n_patients=4, max_rows=8, n_vars=3)
    mask = build_mask(panel)
    multi = multiple_impute(panel, mask, TdiSpec(seed=3), m=4)
    assert multi.seeds == (3, 4, 5, 6)
    for i in range(panel.n_patients):
        stack = np.stack([r.values.patients[i].values for r in multi.results])
        same = np.all(stack == stack[0], axis=0)
        assert np.array_equal(multi.mean.patients[i].values[~same],
                              stack.mean(axis=0)[~same])
        assert np.array_equal(multi.mean.patients[i].values[same],
                              stack[0][same])
        assert np.array_equal(multi.variance[i][~same],
                              stack.var(axis=0, ddof=1)[~same])
        assert np.all(multi.variance[i][same] == 0.0)


def test_multiple_impute_variance_zero_on_observed_positive_somewhere():
    rng = np.random.default_rng(6)
    panel = random_panel(rng, n_patients=5, max_rows=10, n_vars=3, missing=0.5)
    mask = build_mask(panel)
    multi = multiple_impute(panel, mask, TdiSpec(seed=1), m=3)
    any_positive = False
    for m, var in zip(mask.entries, multi.variance):
        assert np.all(var[m] == 0.0)
        any_positive = any_positive or np.any(var[~m] > 0)
    assert any_positive


def test_multiple_impute_same_seed_runs_identical():
    panel = make_panel([[[1.0, nan], [nan, 2.0], [3.0, 4.0]]])
    mask = build_mask(panel)
    a = multiple_impute(panel, mask, TdiSpec(seed=9), m=2)
    b = multiple_impute(panel, mask, TdiSpec(seed=9), m=2)
    for ra, rb in zip(a.results, b.results):
        for pa, pb in zip(ra.values.patients, rb.values.patients):
            assert np.array_equal(pa.values, pb.values)


def test_unbiased_variance_convention():
    # across-run variance of {1, 2, 3} must be 1 (ddof = 1)
    assert np.var([1.0, 2.0, 3.0], ddof=1) == 1.0
