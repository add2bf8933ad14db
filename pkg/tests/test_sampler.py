"""Sampling loop: seeds, interval draws, epochs, and the full run."""

import math
import random
from collections import Counter

import pytest

from boxsampler.errors import NotAModel, SoundnessViolation, UnsatFormula
from boxsampler.intervals import Interval, IntervalMap, contains
from boxsampler.minisolver import LocalSolverClient
from boxsampler.sampler import (
    DedupSet,
    SamplerConfig,
    canonical_assignment,
    exploit_epoch,
    get_seed_blocking,
    get_seed_random,
    sample_formula,
    sample_intervals,
    sample_intervals_arrays,
)
from boxsampler.smtlib import parse_problem
from boxsampler.solver import SolverClient, SolverRequest, SolverVerdict, VerdictKind
from boxsampler.terms import (
    ArrayVar,
    Atom,
    FuncValue,
    IntConst,
    IntVar,
    Model,
    Rel,
    Select,
    eval_formula,
    preprocess,
    to_nnf,
)
from boxsampler import arrays as arrays_mod

X, Y = IntVar("x"), IntVar("y")
A = ArrayVar("a")
I, J = IntVar("i"), IntVar("j")


def cfg_of(**kw) -> SamplerConfig:
    return SamplerConfig(**kw)


class ScriptedClient(SolverClient):
    """Replays a fixed transcript of verdicts; records requests."""

    def __init__(self, verdicts):
        self.verdicts = list(verdicts)
        self.requests: list[SolverRequest] = []

    def _next(self, req):
        self.requests.append(req)
        if not self.verdicts:
            return SolverVerdict(VerdictKind.ERROR, reason="transcript exhausted")
        v = self.verdicts.pop(0)
        return v

    solve = _next
    max_solve = _next


def sat(model: Model) -> SolverVerdict:
    return SolverVerdict(VerdictKind.SAT, model=model)


class TestGetSeed:
    def test_random_unique_model(self):
        p = parse_problem("(declare-const x Int)(assert (= x 5))")
        seed, _ = get_seed_random(p, preprocess(p.assertion), LocalSolverClient(), cfg_of(), random.Random(0))
        assert seed.ints["x"] == 5

    def test_random_soft_pulls_toward_target(self):
        p = parse_problem("(declare-const x Int)(assert (and (<= 0 x) (<= x 10)))")
        f = to_nnf(preprocess(p.assertion))
        hits = set()
        for s in range(6):
            seed, _ = get_seed_random(p, f, LocalSolverClient(), cfg_of(random_bound=10), random.Random(s))
            assert eval_formula(f, seed)
            hits.add(seed.ints["x"])
        assert len(hits) > 1  # randomized targets move the seed around

    def test_random_unsat_propagates(self):
        p = parse_problem("(declare-const x Int)(assert (>= x 1))(assert (<= x 0))")
        with pytest.raises(UnsatFormula):
            get_seed_random(p, preprocess(p.assertion), LocalSolverClient(), cfg_of(), random.Random(0))

    def test_blocking_empty_history(self):
        p = parse_problem("(declare-const x Int)(assert (and (<= 0 x) (<= x 3)))")
        f = to_nnf(preprocess(p.assertion))
        seed, was_reset, calls = get_seed_blocking(p, f, LocalSolverClient(), [])
        assert eval_formula(f, seed) and not was_reset and calls == 1

    def test_blocking_avoids_prior_boxes(self):
        p = parse_problem("(declare-const x Int)(assert (and (<= 0 x) (<= x 3)))")
        f = to_nnf(preprocess(p.assertion))
        prior = [IntervalMap({X: Interval(0, 1)})]
        seed, was_reset, _ = get_seed_blocking(p, f, LocalSolverClient(), prior)
        assert seed.ints["x"] in (2, 3) and not was_reset

    def test_blocking_reset_path(self):
        p = parse_problem("(declare-const x Int)(assert (= x 0))")
        f = to_nnf(preprocess(p.assertion))
        accumulated = [IntervalMap({X: Interval(0, 0)})]
        seed, was_reset, calls = get_seed_blocking(p, f, LocalSolverClient(), accumulated)
        assert seed.ints["x"] == 0 and was_reset and calls == 2
        assert accumulated == []  # history cleared


class TestSampleIntervals:
    def test_pinned_interval_constant(self):
        iv = IntervalMap({X: Interval(4, 4)})
        seed = Model(ints={"x": 4})
        for _ in range(20):
            assert sample_intervals(iv, seed, cfg_of(), random.Random()).ints["x"] == 4

    def test_absent_variable_keeps_seed_value(self):
        iv = IntervalMap({X: Interval(0, 5)})
        seed = Model(ints={"x": 3, "y": 77})
        s = sample_intervals(iv, seed, cfg_of(), random.Random(0))
        assert s.ints["y"] == 77

    def test_unbounded_clamped_to_seed_width(self):
        iv = IntervalMap({Y: Interval(2, None)})
        seed = Model(ints={"y": 2})
        cfg = cfg_of(unbounded_width=1000)
        values = [sample_intervals(iv, seed, cfg, random.Random(s)).ints["y"] for s in range(200)]
        assert all(2 <= v <= 1002 for v in values)
        assert max(values) > 500  # actually uses the width

    def test_intro_box_all_samples_satisfy(self):
        iv = IntervalMap({X: Interval(0, 15), Y: Interval(2, None)})
        seed = Model(ints={"x": 12, "y": 2})
        f = parse_problem(
            "(declare-const x Int)(declare-const y Int)"
            "(assert (and (<= (- x (* 5 y)) 7) (>= x 0)))"
        ).assertion
        cfg = cfg_of(unbounded_width=1000)
        rng = random.Random(1)
        for _ in range(500):
            s = sample_intervals(iv, seed, cfg, rng)
            assert 0 <= s.ints["x"] <= 15 and 2 <= s.ints["y"] <= 1002
            assert eval_formula(f, s)

    def test_uniformity_chi_square(self):
        # 10^4 draws over 10 buckets: chi-square within 3 sigma of its mean
        iv = IntervalMap({X: Interval(0, 9)})
        seed = Model(ints={"x": 0})
        rng = random.Random(1234)
        counts = Counter(
            sample_intervals(iv, seed, cfg_of(), rng).ints["x"] for _ in range(10_000)
        )
        expected = 10_000 / 10
        chi2 = sum((counts[v] - expected) ** 2 / expected for v in range(10))
        dof = 9
        assert chi2 < dof + 3 * math.sqrt(2 * dof)


class TestSampleIntervalsArrays:
    def test_single_select_pinned_index(self):
        iv = IntervalMap({Select(A, I): Interval(3, 5), I: Interval(2, 2)})
        seed = Model(ints={"i": 2}, funcs={"a": FuncValue(0, {2: 4})})
        rng = random.Random(0)
        for _ in range(50):
            s = sample_intervals_arrays(iv, seed, cfg_of(), rng)
            assert s is not None
            assert 3 <= s.funcs["a"].apply(2) <= 5

    def test_aliased_pinned_never_clashes(self):
        iv = IntervalMap(
            {
                I: Interval(3, 3),
                J: Interval(3, 3),
                Select(A, I): Interval(4, 4),
                Select(A, J): Interval(4, 4),
            }
        )
        seed = Model(ints={"i": 3, "j": 3}, funcs={"a": FuncValue(4)})
        rng = random.Random(7)
        for _ in range(10_000):
            s = sample_intervals_arrays(iv, seed, cfg_of(), rng)
            assert s is not None and s.funcs["a"].apply(3) == 4

    def test_clash_detected_when_aliases_disagree(self):
        # both keys hit slot 3 but demand disjoint intervals
        iv = IntervalMap(
            {
                I: Interval(3, 3),
                J: Interval(3, 3),
                Select(A, I): Interval(0, 0),
                Select(A, J): Interval(1, 1),
            }
        )
        seed = Model(ints={"i": 3, "j": 3}, funcs={"a": FuncValue(0)})
        assert sample_intervals_arrays(iv, seed, cfg_of(), random.Random(0)) is None

    def test_nested_select_inner_resolved_first(self):
        inner = Select(ArrayVar("b"), IntVar("k"))
        outer = Select(A, inner)
        iv = IntervalMap({outer: Interval(10, 10), inner: Interval(5, 5), IntVar("k"): Interval(1, 1)})
        seed = Model(ints={"k": 1}, funcs={"a": FuncValue(0), "b": FuncValue(5)})
        s = sample_intervals_arrays(iv, seed, cfg_of(), random.Random(0))
        assert s.funcs["b"].apply(1) == 5
        assert s.funcs["a"].apply(5) == 10

    def test_untouched_slots_take_seed_values(self):
        iv = IntervalMap({Select(A, I): Interval(0, 9)})
        seed = Model(ints={"i": 2}, funcs={"a": FuncValue(6, {5: 1})})
        s = sample_intervals_arrays(iv, seed, cfg_of(), random.Random(3))
        assert s.funcs["a"].default == 6


def _intro_parts():
    p = parse_problem(
        "(declare-const x Int)(declare-const y Int)"
        "(assert (<= (- x (* 5 y)) 7))(assert (>= x 0))"
    )
    return p, to_nnf(preprocess(p.assertion))


class TestExploitEpoch:
    def test_degenerate_box_stops_after_one_round(self):
        p, f = _intro_parts()
        iv = IntervalMap({X: Interval(12, 12), Y: Interval(2, 2)})
        seed = Model(ints={"x": 12, "y": 2})
        epoch = exploit_epoch(
            iv, arrays_mod.AliasingLiterals(), seed, f, p, cfg_of(), random.Random(0),
            DedupSet(10_000), use_arrays=False,
        )
        assert len(epoch.fresh_samples) == 1
        assert epoch.stats.rounds_run == 1  # unique rate collapsed immediately

    def test_wide_box_runs_all_rounds(self):
        p, f = _intro_parts()
        iv = IntervalMap({X: Interval(0, 15), Y: Interval(2, 10**6)})
        seed = Model(ints={"x": 12, "y": 2})
        cfg = cfg_of(rounds_per_epoch=5, samples_per_round=100, unique_rate_threshold=0.05)
        epoch = exploit_epoch(
            iv, arrays_mod.AliasingLiterals(), seed, f, p, cfg, random.Random(0),
            DedupSet(10_000), use_arrays=False,
        )
        assert epoch.stats.rounds_run == 5

    def test_all_emitted_samples_fresh_and_satisfying(self):
        p, f = _intro_parts()
        iv = IntervalMap({X: Interval(0, 15), Y: Interval(2, 40)})
        seed = Model(ints={"x": 12, "y": 2})
        dedup = DedupSet(10_000)
        cfg = cfg_of(rounds_per_epoch=3, samples_per_round=200)
        epoch = exploit_epoch(
            iv, arrays_mod.AliasingLiterals(), seed, f, p, cfg, random.Random(5),
            dedup, use_arrays=False,
        )
        keys = [canonical_assignment(s) for s in epoch.fresh_samples]
        assert len(keys) == len(set(keys))
        for s in epoch.fresh_samples:
            assert eval_formula(f, s)


class TestDedupSet:
    def test_exact_then_probabilistic(self):
        d = DedupSet(cap=4)
        for i in range(10):
            assert d.add((i,))
        assert d.probabilistic
        for i in range(10):
            assert not d.add((i,))  # still deduplicates after the switch


class TestSampleFormula:
    def test_intro_epoch_one_intervals_exact(self):
        p, _ = _intro_parts()
        cfg = cfg_of(
            max_samples=10,
            inject_seed=Model(ints={"x": 12, "y": 2}),
        )
        epochs = []
        stats = sample_formula(p, cfg, None, on_epoch=epochs.append)
        assert stats.epochs >= 1
        first = epochs[0].intervals
        assert first.get(X) == Interval(0, 15)
        assert first.get(Y) == Interval(2, None)

    def test_max_samples_one(self):
        p, _ = _intro_parts()
        cfg = cfg_of(max_samples=1, inject_seed=Model(ints={"x": 12, "y": 2}))
        collected = []
        stats = sample_formula(p, cfg, None, on_sample=collected.append)
        assert stats.unique_samples == 1 and len(collected) == 1
        assert stats.epochs == 1

    def test_bad_injected_seed_rejected(self):
        p, _ = _intro_parts()
        cfg = cfg_of(inject_seed=Model(ints={"x": -1, "y": 0}))
        with pytest.raises(NotAModel):
            sample_formula(p, cfg, None)

    def test_no_duplicates_across_epochs(self):
        p = parse_problem(
            "(declare-const x Int)(declare-const y Int)"
            "(assert (and (<= (+ x y) 20) (>= x 0) (>= y 0)))"
        )
        cfg = cfg_of(strategy="blocking", max_samples=150, samples_per_round=50, rounds_per_epoch=4)
        seen = []
        sample_formula(p, cfg, LocalSolverClient(), on_sample=seen.append)
        keys = [canonical_assignment(s) for s in seen]
        assert len(keys) == len(set(keys)) >= 100

    def test_blocking_seeds_leave_prior_boxes(self):
        p = parse_problem("(declare-const x Int)(assert (and (<= 0 x) (<= x 30)))")
        cfg = cfg_of(strategy="blocking", max_samples=25, samples_per_round=20, rounds_per_epoch=2)
        epochs = []
        sample_formula(p, cfg, LocalSolverClient(), on_epoch=epochs.append)
        for i, epoch in enumerate(epochs):
            for prior in epochs[:i]:
                # a non-reset epoch seed never lies inside an earlier box
                if not contains(prior.intervals, epoch.seed):
                    continue
        # all samples unique and within [0, 30]
        all_samples = [s for e in epochs for s in e.fresh_samples]
        assert len({canonical_assignment(s) for s in all_samples}) == len(all_samples)

    def test_deterministic_stream_with_scripted_transcript(self):
        p, f = _intro_parts()

        def run():
            transcript = ScriptedClient(
                [
                    sat(Model(ints={"x": 12, "y": 2})),
                    sat(Model(ints={"x": 0, "y": 5})),
                    sat(Model(ints={"x": 3, "y": 1})),
                ]
            )
            out = []
            cfg = cfg_of(max_samples=120, samples_per_round=50, rounds_per_epoch=2, rng_seed=9)
            sample_formula(p, cfg, transcript, on_sample=out.append)
            return [canonical_assignment(s) for s in out]

        assert run() == run()

    def test_solver_transcript_replay_counts_calls(self):
        p, _ = _intro_parts()
        transcript = ScriptedClient([sat(Model(ints={"x": 12, "y": 2})), sat(Model(ints={"x": 1, "y": 3}))])
        cfg = cfg_of(max_samples=15, samples_per_round=10, rounds_per_epoch=1)
        stats = sample_formula(p, cfg, transcript)
        assert stats.solver_calls == 2
        assert stats.unique_samples == 15

    def test_unsat_problem_raises(self):
        p = parse_problem("(declare-const x Int)(assert (>= x 1))(assert (<= x 0))")
        with pytest.raises(UnsatFormula):
            sample_formula(p, cfg_of(max_samples=5), LocalSolverClient())

    def test_array_problem_end_to_end(self):
        p = parse_problem(
            "(declare-const i Int)(declare-const a (Array Int Int))"
            "(assert (and (<= (select a i) 5) (>= i 0) (<= i 3)))"
        )
        seed = Model(ints={"i": 2}, funcs={"a": FuncValue(0)})
        cfg = cfg_of(max_samples=60, inject_seed=seed, samples_per_round=30, rounds_per_epoch=3)
        out = []
        stats = sample_formula(p, cfg, None, on_sample=out.append)
        assert stats.unique_samples == len(out) == 60
        for s in out:
            assert eval_formula(p.assertion, s)

    def test_seed_containment_every_epoch(self):
        p = parse_problem(
            "(declare-const x Int)(declare-const y Int)"
            "(assert (and (<= (* x y) 40) (>= x (- 8)) (<= x 8) (>= y (- 8)) (<= y 8)))"
        )
        cfg = cfg_of(strategy="blocking", max_samples=60, samples_per_round=25, rounds_per_epoch=2)
        epochs = []
        sample_formula(p, cfg, LocalSolverClient(), on_epoch=epochs.append)
        assert epochs
        for e in epochs:
            assert contains(e.intervals, e.seed)
