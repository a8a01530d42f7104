"""Tests for the benchmark plants, reference signals, and simulation harness."""

import csv
import io

import numpy as np
import pytest

from mfaclab.analysis import ramp_static_error
from mfaclab.controller import BoxConstraints, Weighting
from mfaclab.edlm import Dimensions, PseudoJacobian, RegressorWindow
from mfaclab.errors import DivergenceError, ShapeError
from mfaclab.plant import (
    DIVERGENCE_LIMIT,
    SIMLOG_SCHEMA,
    VARIANTS,
    Example1Plant,
    Example1Reference,
    LTIPlant,
    RampReference,
    SimLog,
    SimRecord,
    StepReference,
    ZeroReference,
    example1_reference,
    metrics,
    simulate,
)


def zero_window(dims, k=1):
    return RegressorWindow(
        dims=dims,
        k=k,
        y_history=[np.zeros(dims.My)] * max(k, 1),
        u_history=[np.zeros(dims.Mu)] * max(k, 1),
    )


def scalar_plant(a=0.5, b=1.0):
    return LTIPlant([np.array([[a]])], [np.array([[b]])])


# ------------------------------------------------------- reference signal


def test_reference_sinusoid_values():
    # independently evaluated samples of the published waveform
    np.testing.assert_allclose(
        example1_reference(40),
        [0.3356706627517974, 0.14022087134740813],
        rtol=1e-14,
    )
    np.testing.assert_allclose(
        example1_reference(400),
        [-0.2448227456294893, 0.3572080924689866],
        rtol=1e-14,
    )


def test_reference_square_wave_levels():
    np.testing.assert_array_equal(example1_reference(401), [0.2, -0.2])
    np.testing.assert_array_equal(example1_reference(424), [0.2, -0.2])
    # rounding half away from zero puts the flip at 425, not 426
    np.testing.assert_array_equal(example1_reference(425), [-0.2, 0.2])
    np.testing.assert_array_equal(example1_reference(475), [0.2, -0.2])
    np.testing.assert_array_equal(example1_reference(500), [0.2, -0.2])
    np.testing.assert_array_equal(example1_reference(800), [0.2, -0.2])


def test_reference_switches_waveform_after_400():
    before = example1_reference(400)
    after = example1_reference(401)
    assert abs(after[0] - before[0]) > 0.4


def test_reference_domain():
    with pytest.raises(ValueError):
        example1_reference(0)
    with pytest.raises(ValueError):
        example1_reference(801)


def test_reference_classes():
    np.testing.assert_array_equal(Example1Reference().sample(40), example1_reference(40))
    np.testing.assert_array_equal(RampReference(2, Ts=0.5).sample(3), [1.5, 1.5])
    np.testing.assert_array_equal(StepReference(2, amplitude=0.7).sample(123), [0.7, 0.7])
    np.testing.assert_array_equal(ZeroReference(3).sample(7), np.zeros(3))


# ----------------------------------------------------------------- plants


def test_example1_plant_dims_and_hand_values():
    plant = Example1Plant()
    d = plant.dims
    assert (d.My, d.Mu, d.ny, d.nu) == (2, 2, 0, 1)

    zero = np.zeros(2)
    u = np.array([0.1, 0.2])
    np.testing.assert_allclose(plant.evaluate([zero, u, zero]), [0.14, 0.17], rtol=1e-15)
    # lagged input enters through the cubic and quartic terms
    v = np.array([0.1, 0.2])
    np.testing.assert_allclose(plant.evaluate([zero, u, v]), [0.1412, 0.179], rtol=1e-13)


def test_lti_plant_validation():
    with pytest.raises(ShapeError):
        LTIPlant([np.eye(2)], [])
    with pytest.raises(ShapeError):
        LTIPlant([np.eye(3)], [np.eye(2)])
    with pytest.raises(ShapeError):
        LTIPlant([np.eye(2)], [np.eye(2), np.ones((2, 3))])


def test_lti_plant_dims():
    d = LTIPlant([np.eye(2)], [np.eye(2), np.eye(2)]).dims
    assert (d.ny, d.nu) == (0, 1)
    static = LTIPlant([], [np.array([[2.0]])]).dims
    assert (static.ny, static.nu) == (-1, 0)
    assert (static.Ly, static.Lu) == (0, 1)


def test_lti_plant_evaluate():
    a0 = np.array([[0.3, 0.1], [0.0, 0.2]])
    b0 = np.array([[1.0, 0.0], [0.5, 1.0]])
    b1 = np.array([[0.2, 0.0], [0.0, 0.1]])
    plant = LTIPlant([a0], [b0, b1])
    y = np.array([1.0, -1.0])
    u0 = np.array([0.5, 0.25])
    u1 = np.array([-0.2, 0.4])
    np.testing.assert_allclose(
        plant.evaluate([y, u0, u1]),
        a0 @ y + b0 @ u0 + b1 @ u1,
        rtol=1e-15,
    )


# --------------------------------------------------------------- simulate


def test_simulate_rejects_bad_setup():
    plant = scalar_plant()
    w = Weighting.uniform(0.1, 1)
    init = zero_window(plant.dims)
    with pytest.raises(ValueError):
        simulate(plant, "bogus", ZeroReference(1), 10, init, w)
    with pytest.raises(ValueError):
        simulate(plant, "constrained", ZeroReference(1), 10, init, w)
    with pytest.raises(ValueError):
        simulate(plant, "first_order", ZeroReference(1), 3, zero_window(plant.dims, k=5), w)
    mismatched = RegressorWindow(
        dims=Dimensions.preferred(My=2, Mu=2, ny=0, nu=0),
        k=1,
        y_history=[np.zeros(2)],
        u_history=[np.zeros(2)],
    )
    with pytest.raises(ShapeError):
        simulate(plant, "first_order", ZeroReference(1), 10, mismatched, w)


def test_simulate_zero_reference_stays_zero():
    plant = scalar_plant()
    w = Weighting.uniform(0.1, 1)
    box = BoxConstraints(lower=np.array([-1.0]), upper=np.array([1.0]))
    for variant in VARIANTS:
        log = simulate(
            plant,
            variant,
            ZeroReference(1),
            steps=40,
            init=zero_window(plant.dims),
            w=w,
            box=box if variant == "constrained" else None,
        )
        assert len(log) == 40
        assert all(np.all(r.y == 0.0) and np.all(r.u == 0.0) for r in log.records)


def test_simulate_prehistory_rows_come_from_window():
    plant = scalar_plant()
    dims = plant.dims
    init = RegressorWindow(
        dims=dims,
        k=3,
        y_history=[np.array([3.0]), np.array([2.0]), np.array([1.0])],
        u_history=[np.array([0.3]), np.array([0.2]), np.array([0.1])],
    )
    seed = PseudoJacobian.constant(0.5, dims)
    log = simulate(plant, "first_order", ZeroReference(1), 6, init, Weighting.uniform(0.1, 1), pjm_seed=seed)
    r1, r2, r3 = log.records[:3]
    assert (r1.k, r2.k, r3.k) == (1, 2, 3)
    np.testing.assert_array_equal(r1.y, [1.0])
    np.testing.assert_array_equal(r2.y, [2.0])
    np.testing.assert_array_equal(r3.y, [3.0])
    np.testing.assert_array_equal(r1.u, [0.2])
    np.testing.assert_array_equal(r2.u, [0.3])
    np.testing.assert_allclose(r1.delta_u, [0.1], rtol=1e-15)
    np.testing.assert_allclose(r2.delta_u, [0.1], rtol=1e-15)
    for r in (r1, r2):
        assert r.iterations == 0 and r.cost == 0.0
        np.testing.assert_array_equal(r.pjm.input_blocks[0], seed.input_blocks[0])


def test_simulate_final_row_holds_input():
    plant = scalar_plant()
    log = simulate(
        plant,
        "first_order",
        StepReference(1, 0.5),
        steps=30,
        init=zero_window(plant.dims),
        w=Weighting.uniform(0.1, 1),
    )
    last, prev = log.records[-1], log.records[-2]
    assert last.k == 30
    np.testing.assert_array_equal(last.u, prev.u)
    np.testing.assert_array_equal(last.delta_u, [0.0])
    assert last.iterations == 0 and last.cost == 0.0


def test_simulate_step_tracking_converges():
    plant = scalar_plant(a=0.5, b=1.0)
    log = simulate(
        plant,
        "first_order",
        StepReference(1, 0.5),
        steps=200,
        init=zero_window(plant.dims),
        w=Weighting.uniform(0.1, 1),
    )
    tail = [abs(r.y_ref[0] - r.y[0]) for r in log.records if r.k > 150]
    assert max(tail) < 1e-8


def test_simulate_divergence_aborts_with_partial_log():
    # open-loop unstable pole and a near-frozen input: 3^(k-1) crosses the
    # limit on step 14
    plant = scalar_plant(a=3.0, b=1.0)
    init = RegressorWindow(
        dims=plant.dims, k=1, y_history=[np.array([1.0])], u_history=[np.zeros(1)]
    )
    with pytest.raises(DivergenceError) as err:
        simulate(plant, "first_order", ZeroReference(1), 60, init, Weighting.uniform(1e9, 1))
    assert err.value.step == 14
    assert len(err.value.log) == 13
    assert err.value.log.records[-1].k == 13
    assert abs(err.value.log.records[-1].y[0]) > DIVERGENCE_LIMIT / 3.5


def test_simulate_ramp_settles_to_analytic_offset():
    # static unit-gain plant: lag-free loop, so the tracking offset under a
    # unit ramp has a closed form that the long run must approach
    plant = LTIPlant([], [np.array([[1.0]])])
    lam = 0.2
    log = simulate(
        plant,
        "first_order",
        RampReference(1, Ts=1.0),
        steps=5000,
        init=zero_window(plant.dims),
        w=Weighting.uniform(lam, 1),
    )
    measured = log.records[-1].y_ref[0] - log.records[-1].y[0]
    pjm = PseudoJacobian((), (np.array([[1.0]]),))
    analytic = ramp_static_error(pjm, Weighting.uniform(lam, 1), Ts=1.0)[0]
    assert analytic == pytest.approx(0.2, rel=1e-12)
    assert measured == pytest.approx(analytic, rel=0.01)


# -------------------------------------------------------------- benchmark


def example1_run(variant, steps=800, lam=0.2):
    plant = Example1Plant()
    dims = plant.dims
    init = RegressorWindow(
        dims=dims,
        k=3,
        y_history=[np.zeros(dims.My)] * 3,
        u_history=[np.zeros(dims.Mu)] * 2,
    )
    box = BoxConstraints(lower=np.array([-0.3, -0.5]), upper=np.array([0.1, 0.5]))
    return simulate(
        plant,
        variant,
        Example1Reference(),
        steps=steps,
        init=init,
        w=Weighting.uniform(lam, dims.My),
        box=box if variant == "constrained" else None,
        pjm_seed=PseudoJacobian.constant(0.01, dims),
    )


def smooth_segment_max(log):
    # the waveform switches to a square wave after step 400; per-step jumps
    # there are reference discontinuities, not controller error
    err = np.array([np.abs(r.y_ref - r.y) for r in log.records if 100 < r.k <= 400])
    return err.max(axis=0)


def test_benchmark_first_order_tracks():
    log = example1_run("first_order")
    assert max(np.max(np.abs(r.y)) for r in log.records) < 5.0
    assert np.all(smooth_segment_max(log) < 0.05)


def test_benchmark_constrained_respects_box():
    log = example1_run("constrained")
    report = metrics(log, transient_cutoff=100)
    assert report.constraint_violations == 0
    lo, hi = log.box.lower, log.box.upper
    assert all(np.all(r.u >= lo) and np.all(r.u <= hi) for r in log.records)
    assert np.all(smooth_segment_max(log) < 0.5)


# ---------------------------------------------------------------- metrics


def manual_log(errors, us=None, box=None):
    dims = Dimensions.preferred(My=1, Mu=1, ny=0, nu=0)
    pjm = PseudoJacobian.constant(0.0, dims)
    log = SimLog(dims=dims, variant="first_order", weighting=Weighting.uniform(0.1, 1), box=box)
    for i, e in enumerate(errors):
        u = np.array([us[i]]) if us is not None else np.zeros(1)
        log.records.append(
            SimRecord(k=i + 1, y=np.array([0.0]), y_ref=np.array([e]), u=u,
                      delta_u=np.zeros(1), pjm=pjm, cost=0.0, iterations=0)
        )
    return log


def test_metrics_perfect_tracking_is_zero():
    report = metrics(manual_log([0.0] * 10), transient_cutoff=2)
    np.testing.assert_array_equal(report.rmse, [0.0])
    np.testing.assert_array_equal(report.max_abs_error, [0.0])
    assert report.constraint_violations == 0


def test_metrics_constant_error():
    report = metrics(manual_log([0.1] * 10), transient_cutoff=0)
    np.testing.assert_allclose(report.rmse, [0.1], rtol=1e-15)
    np.testing.assert_allclose(report.max_abs_error, [0.1], rtol=1e-15)


def test_metrics_cutoff_drops_transient():
    report = metrics(manual_log([9.0, 9.0, 0.2, 0.1]), transient_cutoff=2)
    np.testing.assert_allclose(report.max_abs_error, [0.2], rtol=1e-15)
    np.testing.assert_allclose(report.rmse, [np.sqrt((0.04 + 0.01) / 2)], rtol=1e-15)


def test_metrics_empty_window_rejected():
    with pytest.raises(ValueError):
        metrics(manual_log([0.0] * 5), transient_cutoff=5)


def test_metrics_counts_violations_over_all_rows():
    box = BoxConstraints(lower=np.array([-1.0]), upper=np.array([1.0]))
    # violations land in the transient, yet they must still be counted
    log = manual_log([0.0] * 6, us=[2.0, -3.0, 0.5, 0.5, 0.5, 0.5], box=box)
    report = metrics(log, transient_cutoff=3)
    assert report.constraint_violations == 2


# -------------------------------------------------------------------- csv


def test_csv_layout_and_round_trip():
    log = example1_run("first_order", steps=12)
    buf = io.StringIO()
    log.to_csv(buf)
    text = buf.getvalue()
    lines = text.splitlines()
    assert lines[0] == f"# schema: {SIMLOG_SCHEMA}"

    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    header, data = rows[0], rows[1:]
    assert header == log.csv_header()
    assert len(data) == len(log) == 12
    assert all(len(row) == len(header) for row in data)

    # repr round trip: parsed floats equal the logged arrays exactly
    idx = {name: i for i, name in enumerate(header)}
    for row, rec in zip(data, log.records):
        assert int(row[idx["k"]]) == rec.k
        assert float(row[idx["y1"]]) == rec.y[0]
        assert float(row[idx["y2"]]) == rec.y[1]
        assert float(row[idx["u1"]]) == rec.u[0]
        assert float(row[idx["du2"]]) == rec.delta_u[1]
        assert float(row[idx["cost"]]) == rec.cost
        assert int(row[idx["iters"]]) == rec.iterations
        assert float(row[idx["Phi1[0,0]"]]) == rec.pjm.output_blocks[0][0, 0]
        assert float(row[idx["Phi3[1,0]"]]) == rec.pjm.input_blocks[1][1, 0]


def test_csv_rerun_is_byte_identical():
    first, second = io.StringIO(), io.StringIO()
    example1_run("first_order", steps=25).to_csv(first)
    example1_run("first_order", steps=25).to_csv(second)
    assert first.getvalue() == second.getvalue()


def test_metrics_match_csv_recomputation():
    log = example1_run("first_order", steps=60)
    buf = io.StringIO()
    log.to_csv(buf)
    lines = buf.getvalue().splitlines()
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    idx = {name: i for i, name in enumerate(rows[0])}
    cutoff = 20
    err = np.array(
        [
            [
                float(row[idx["yref1"]]) - float(row[idx["y1"]]),
                float(row[idx["yref2"]]) - float(row[idx["y2"]]),
            ]
            for row in rows[1:]
            if int(row[idx["k"]]) > cutoff
        ]
    )
    report = metrics(log, transient_cutoff=cutoff)
    np.testing.assert_allclose(report.rmse, np.sqrt(np.mean(err**2, axis=0)), rtol=1e-12)
    np.testing.assert_allclose(report.max_abs_error, np.max(np.abs(err), axis=0), rtol=1e-12)
