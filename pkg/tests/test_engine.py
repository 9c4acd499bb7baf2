"""Batch evaluation engine: ordering, caching, worker pools, adapters."""

import os
import sys
import time

import numpy as np
import pytest

from idkit.engine import (
    AdapterProtocolError,
    AdapterTimeoutError,
    Engine,
    EngineError,
    SimulatorBinding,
    adapter_roundtrip,
    cache_key,
    evaluate_batch,
    throughput_curve,
)
from idkit.problems import get_space
from idkit.space import DesignPoint, mse_loss
from idkit.tmm import motf_forward

FIXTURE = os.path.join(os.path.dirname(__file__), "fixture_adapter.py")
ECHO_CMD = f"{sys.executable} -m idkit.adapters"


def fixture_cmd(*args) -> str:
    return " ".join([sys.executable, FIXTURE, *map(str, args)])


def sample_points(problem, n, seed=0):
    space = get_space(problem)
    rng = np.random.default_rng(seed)
    return [space.sample_uniform(rng) for _ in range(n)]


def external_binding(problem="scf", cmd=ECHO_CMD, **kw):
    kw.setdefault("timeout", 20.0)
    return SimulatorBinding(kind="external-adapter", problem=problem, adapter_cmd=cmd, **kw)


class TestBinding:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            SimulatorBinding(kind="magic", problem="motf")

    def test_rejects_zero_workers(self):
        with pytest.raises(ValueError):
            SimulatorBinding(kind="internal-motf", problem="motf", workers=0)

    def test_adapter_cmd_iff_external(self):
        with pytest.raises(ValueError):
            SimulatorBinding(kind="external-adapter", problem="scf")
        with pytest.raises(ValueError):
            SimulatorBinding(kind="internal-motf", problem="motf", adapter_cmd="cat")


class TestInternal:
    def test_results_in_input_order_and_match_direct_sim(self):
        pts = sample_points("motf", 8)
        target = np.linspace(0.0, 1.0, 2001)
        binding = SimulatorBinding(kind="internal-motf", problem="motf", workers=4)
        recs = evaluate_batch(binding, pts, target=target)
        assert [r.trial for r in recs] == list(range(8))
        for p, r in zip(pts, recs):
            y = motf_forward(p)
            assert np.array_equal(r.response, y)
            assert r.loss == mse_loss(y, target)
            assert r.point == p
            assert r.wall_time > 0.0

    def test_worker_count_does_not_change_results(self):
        pts = sample_points("motf", 6, seed=3)
        runs = []
        for w in (1, 8):
            binding = SimulatorBinding(kind="internal-motf", problem="motf", workers=w)
            runs.append(evaluate_batch(binding, pts))
        for a, b in zip(*runs):
            assert np.array_equal(a.response, b.response)
            assert a.loss == b.loss

    def test_duplicate_point_is_bitwise_cache_hit(self):
        pts = sample_points("motf", 3, seed=1)
        batch = pts + [pts[1]]
        binding = SimulatorBinding(kind="internal-motf", problem="motf", workers=4, cache=True)
        recs = Engine(binding).evaluate_batch(batch)
        assert recs[3].meta.get("cache") == "hit"
        assert np.array_equal(recs[3].response, recs[1].response)
        assert "cache" not in recs[1].meta

    def test_without_cache_duplicates_are_simulated(self):
        pts = sample_points("scf", 2, seed=2)
        binding = SimulatorBinding(kind="internal-synthetic", problem="scf", workers=2)
        recs = evaluate_batch(binding, pts + [pts[0]])
        assert all("cache" not in r.meta for r in recs)
        assert np.array_equal(recs[0].response, recs[2].response)

    def test_cache_persists_across_engines(self, tmp_path):
        path = str(tmp_path / "cache.jsonl")
        pts = sample_points("scf", 4, seed=5)
        binding = SimulatorBinding(
            kind="internal-synthetic", problem="scf", workers=2, cache=True, cache_path=path
        )
        first = Engine(binding).evaluate_batch(pts)
        assert os.path.getsize(path) > 0
        second = Engine(binding).evaluate_batch(pts)
        for a, b in zip(first, second):
            assert b.meta.get("cache") == "hit"
            assert np.array_equal(a.response, b.response)

    def test_rejects_invalid_point(self):
        space = get_space("scf")
        good = sample_points("scf", 1)[0]
        bad = DesignPoint((-1.0,) + good.values[1:])
        binding = SimulatorBinding(kind="internal-synthetic", problem="scf")
        with pytest.raises(EngineError):
            evaluate_batch(binding, [bad])
        assert space.validate(good).ok

    def test_sleep_simulator_scales_with_workers(self):
        pts = sample_points("scf", 32, seed=7)
        binding = SimulatorBinding(
            kind="internal-synthetic", problem="scf", workers=1, sleep_s=0.05
        )
        curve = throughput_curve(binding, pts, [1, 8])
        assert [w for w, _ in curve] == [1, 8]
        t1 = dict(curve)[1]
        t8 = dict(curve)[8]
        assert t1 / t8 >= 4.0


class TestCacheKey:
    def test_equal_points_equal_keys(self):
        space = get_space("motf")
        p = sample_points("motf", 1)[0]
        q = DesignPoint(tuple(p.values))
        assert cache_key(space, p, "motf") == cache_key(space, q, "motf")

    def test_quantization_merges_noise_but_splits_real_deltas(self):
        space = get_space("scf")
        u = np.full(space.dim, 0.5003)
        base = cache_key(space, space.denormalize(u), "scf")
        noise = cache_key(space, space.denormalize(u + 2e-10), "scf")
        real = cache_key(space, space.denormalize(u + 5e-9), "scf")
        assert base == noise
        assert base != real

    def test_problem_id_enters_the_key(self):
        space = get_space("scf")
        p = sample_points("scf", 1)[0]
        assert cache_key(space, p, "scf") != cache_key(space, p, "other")


class TestEchoAdapter:
    def test_roundtrip_returns_exact_coordinates(self):
        p = sample_points("scf", 1, seed=11)[0]
        rec = adapter_roundtrip(external_binding(), p)
        assert not rec.failed
        assert list(rec.response) == [float(v) for v in p.values[:3]]

    def test_batch_of_sixty_zero_failures(self):
        pts = sample_points("scf", 60, seed=13)
        recs = evaluate_batch(external_binding(workers=4), pts)
        assert len(recs) == 60
        assert all(not r.failed for r in recs)
        for p, r in zip(pts, recs):
            assert list(r.response) == [float(v) for v in p.values[:3]]

    def test_categorical_coordinates_echo_as_zero(self):
        p = sample_points("motf", 1, seed=17)[0]
        rec = adapter_roundtrip(external_binding(problem="motf"), p)
        n_lead = sum(1 for v in p.values if isinstance(v, str))
        assert n_lead > 0
        assert list(rec.response[:n_lead]) == [0.0] * n_lead
        assert rec.response.shape == (2001,)

    def test_external_duplicate_cache_hit(self):
        pts = sample_points("scf", 3, seed=19)
        recs = Engine(external_binding(workers=2, cache=True)).evaluate_batch(pts + [pts[0]])
        assert recs[3].meta.get("cache") == "hit"
        assert np.array_equal(recs[3].response, recs[0].response)

    def test_geometry_payload_accepted(self):
        pts = sample_points("tpv", 2, seed=23)
        binding = external_binding(problem="tpv", workers=1, send_geometry=True)
        engine = Engine(binding)
        recs = engine.evaluate_batch(pts)
        assert all(not r.failed for r in recs)
        assert engine._geom_dir is not None
        pgms = [f for f in os.listdir(engine._geom_dir) if f.endswith(".pgm")]
        assert len(pgms) == 2


class TestAdapterFaults:
    def test_wrong_id_is_protocol_error(self):
        p = sample_points("scf", 1)[0]
        with pytest.raises(AdapterProtocolError, match="id mismatch"):
            adapter_roundtrip(external_binding(cmd=fixture_cmd("wrong-id")), p)

    def test_garbage_line_is_protocol_error_with_raw_line(self):
        p = sample_points("scf", 1)[0]
        with pytest.raises(AdapterProtocolError, match="not json"):
            adapter_roundtrip(external_binding(cmd=fixture_cmd("garbage")), p)

    def test_slow_adapter_times_out(self):
        p = sample_points("scf", 1)[0]
        binding = external_binding(cmd=fixture_cmd("sleep", 30), timeout=0.5)
        t0 = time.monotonic()
        with pytest.raises(AdapterTimeoutError):
            adapter_roundtrip(binding, p)
        assert time.monotonic() - t0 < 5.0

    def test_immediate_exit_is_engine_error(self):
        p = sample_points("scf", 1)[0]
        with pytest.raises(EngineError) as err:
            adapter_roundtrip(external_binding(cmd=fixture_cmd("exit-now")), p)
        assert not isinstance(err.value, (AdapterProtocolError, AdapterTimeoutError))

    def test_error_response_fails_the_point_not_the_batch(self):
        pts = sample_points("scf", 4, seed=29)
        recs = evaluate_batch(external_binding(cmd=fixture_cmd("error-always"), workers=2), pts)
        assert len(recs) == 4
        assert all(r.failed for r in recs)
        assert all("fixture says no" in r.meta["error"] for r in recs)
        assert all(r.loss == float("inf") for r in recs)

    def test_error_response_roundtrip_returns_failed_record(self):
        p = sample_points("scf", 1)[0]
        rec = adapter_roundtrip(external_binding(cmd=fixture_cmd("error-always")), p)
        assert rec.failed
        assert "fixture says no" in rec.meta["error"]

    def test_crash_mid_batch_reschedules_to_survivors(self, tmp_path):
        marker = str(tmp_path / "crashed")
        pts = sample_points("scf", 10, seed=31)
        binding = external_binding(cmd=fixture_cmd("crash-once", marker), workers=3)
        recs = Engine(binding).evaluate_batch(pts)
        assert os.path.exists(marker), "fixture never crashed"
        assert len(recs) == 10
        assert all(r is not None for r in recs)
        assert all(not r.failed for r in recs)
        for p, r in zip(pts, recs):
            assert list(r.response) == [float(v) for v in p.values[:3]]

    def test_all_workers_dead_marks_remaining_failed(self):
        pts = sample_points("scf", 5, seed=37)
        recs = evaluate_batch(external_binding(cmd=fixture_cmd("exit-now"), workers=2), pts)
        assert len(recs) == 5
        assert all(r.failed for r in recs)

    def test_unlaunchable_adapter_fails_batch_with_reason(self):
        pts = sample_points("scf", 2, seed=41)
        recs = evaluate_batch(external_binding(cmd="/does/not/exist-xyz", workers=2), pts)
        assert all(r.failed for r in recs)
        assert all("adapter" in r.meta["error"] for r in recs)
