"""Epoch-based sampling loop.

Each epoch grabs a fresh seed model from the solver (randomized MAX-SMT or
blocking), extracts an implicant of the formula around the seed, shrinks it
to interval bounds, and then draws many cheap samples from the box.  Every
emitted sample is re-verified against the input formula and deduplicated
run-wide.  Interval formulas accumulate so the blocking strategy can steer
later seeds away from already-covered regions.
"""

from __future__ import annotations

import hashlib
import random
import time
from dataclasses import dataclass, field

from . import arrays as arrays_mod
from . import strengthen as strengthen_mod
from .errors import NotAModel, SolverFailure, SoundnessViolation, UnsatFormula
from .implicant import compute_implicant
from .intervals import IntervalMap, contains, neg_to_formula
from .smtlib import Declaration, ParsedProblem, print_formula
from .solver import SolverClient, SolverRequest, SolverVerdict, VerdictKind
from .terms import (
    ArrayVar,
    Atom,
    Formula,
    FunApp,
    FuncValue,
    IntConst,
    IntVar,
    Model,
    Rel,
    Select,
    Sort,
    Term,
    eval_formula,
    eval_term,
    free_symbols,
    fun_names,
    iter_subterms,
    preprocess,
    to_nnf,
)


@dataclass
class SamplerConfig:
    strategy: str = "random"  # "random" | "blocking"
    total_time_limit: float = 900.0
    epoch_time_limit: float = 600.0
    max_samples: int | None = None
    rounds_per_epoch: int = 10
    samples_per_round: int = 1000
    unique_rate_threshold: float = 0.05
    random_bound: int = 100
    unbounded_width: int = 10**6
    rng_seed: int = 0
    dedup_cap: int = 1_000_000
    inject_seed: Model | None = None  # test hook: fixed first seed

    def __post_init__(self):
        if self.strategy not in ("random", "blocking"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.total_time_limit <= 0 or self.epoch_time_limit <= 0:
            raise ValueError("time limits must be positive")
        if not 0.0 <= self.unique_rate_threshold <= 1.0:
            raise ValueError("unique-rate threshold must lie in [0, 1]")


@dataclass
class EpochStats:
    solver_calls: int = 0
    rounds_run: int = 0
    unique_rate: float = 0.0
    clashes: int = 0


@dataclass
class EpochResult:
    seed: Model
    intervals: IntervalMap
    aliasing: arrays_mod.AliasingLiterals
    fresh_samples: list[Model]
    stats: EpochStats


@dataclass
class RunStats:
    epochs: int = 0
    solver_calls: int = 0
    maxsmt_degradations: int = 0
    unique_samples: int = 0
    clashes: int = 0
    blocking_resets: int = 0
    raw_coverage: float | None = None
    probabilistic_dedup: bool = False
    stop_reason: str = ""
    wall_time: dict[str, float] = field(default_factory=dict)


class DedupSet:
    """Run-wide uniqueness filter.  Exact until `cap` entries, after which
    stored keys are replaced by 128-bit digests (collisions astronomically
    unlikely but possible; flagged in run stats)."""

    def __init__(self, cap: int):
        self.cap = cap
        self.keys: set = set()
        self.probabilistic = False

    def add(self, key: tuple) -> bool:
        stored = self._digest(key) if self.probabilistic else key
        if stored in self.keys:
            return False
        self.keys.add(stored)
        if not self.probabilistic and len(self.keys) >= self.cap:
            self.keys = {self._digest(k) for k in self.keys}
            self.probabilistic = True
        return True

    @staticmethod
    def _digest(key: tuple) -> bytes:
        return hashlib.blake2b(repr(key).encode(), digest_size=16).digest()


def canonical_assignment(sample: Model) -> tuple:
    return (
        tuple(sorted(sample.ints.items())),
        tuple(sorted(sample.bools.items())),
        tuple(
            sorted(
                (name, fv.default, tuple(sorted(fv.exceptions.items())))
                for name, fv in sample.funcs.items()
            )
        ),
    )


# ---------------------------------------------------------------------------
# Seed procedures


def _request_declarations(problem: ParsedProblem, extra_formulas: list[Formula]) -> list[Declaration]:
    decls = list(problem.declarations)
    known = {d.name for d in decls}
    for f in extra_formulas:
        for name, sort in free_symbols(f).items():
            if name not in known:
                known.add(name)
                decls.append(Declaration(name, sort if sort != Sort.ARRAY else Sort.ARRAY))
        for name in fun_names(f):
            if name not in known:
                known.add(name)
                decls.append(Declaration(name, Sort.INT, is_function=True))
    return decls


def get_seed_random(
    problem: ParsedProblem, formula: Formula, client: SolverClient, cfg: SamplerConfig, rng: random.Random
) -> tuple[Model, SolverVerdict]:
    """Seed via MAX-SMT: the formula is hard, equality of every int variable
    to a uniformly random value in [-B, B] is soft."""
    soft = [
        (Atom(Rel.EQ, IntVar(d.name), IntConst(rng.randint(-cfg.random_bound, cfg.random_bound))), 1)
        for d in problem.declarations
        if d.sort == Sort.INT and not d.is_function
    ]
    req = SolverRequest(list(problem.declarations), [formula], soft)
    verdict = client.max_solve(req)
    if verdict.kind == VerdictKind.UNSAT:
        raise UnsatFormula("input formula is unsatisfiable")
    if not verdict.is_sat:
        raise SolverFailure(verdict.reason or verdict.kind.value)
    return verdict.model, verdict


def get_seed_blocking(
    problem: ParsedProblem,
    formula: Formula,
    client: SolverClient,
    accumulated: list[IntervalMap],
) -> tuple[Model, bool, int]:
    """Seed outside every accumulated interval box; on failure the history is
    cleared and the search restarts from the plain formula.  Returns the
    seed, whether a reset happened, and the number of solver calls."""
    blocking = [neg_to_formula(iv) for iv in accumulated]
    req = SolverRequest(_request_declarations(problem, blocking), [formula] + blocking, [])
    verdict = client.solve(req)
    calls = 1
    if verdict.is_sat:
        return verdict.model, False, calls
    if verdict.kind not in (VerdictKind.UNSAT, VerdictKind.UNKNOWN):
        raise SolverFailure(verdict.reason or verdict.kind.value)
    accumulated.clear()
    verdict = client.solve(SolverRequest(list(problem.declarations), [formula], []))
    calls += 1
    if verdict.kind == VerdictKind.UNSAT:
        raise UnsatFormula("input formula is unsatisfiable")
    if not verdict.is_sat:
        raise SolverFailure(verdict.reason or verdict.kind.value)
    return verdict.model, True, calls


# ---------------------------------------------------------------------------
# Interval sampling


def _draw(interval, seed_value: int, width: int, rng: random.Random) -> int:
    lo = interval.lo if interval.lo is not None else seed_value - width
    hi = interval.hi if interval.hi is not None else seed_value + width
    return rng.randint(lo, hi)


def sample_intervals(iv: IntervalMap, seed: Model, cfg: SamplerConfig, rng: random.Random) -> Model:
    """Draw one assignment from an integer-only interval map.  Unbounded
    endpoints are clamped to the seed value plus/minus the configured width;
    variables without an interval keep their seed value."""
    ints = dict(seed.ints)
    for key, interval in iv.entries.items():
        assert isinstance(key, IntVar), "integer-only sampling requires variable keys"
        ints[key.name] = _draw(interval, seed.int_value(key.name), cfg.unbounded_width, rng)
    return Model(ints=ints, bools=dict(seed.bools), funcs={n: f.copy() for n, f in seed.funcs.items()})


class Clash(Exception):
    """An already-assigned array slot fell outside a term's interval."""


def sample_intervals_arrays(
    iv: IntervalMap,
    seed: Model,
    cfg: SamplerConfig,
    rng: random.Random,
    reconstructions: list[tuple[str, Term]] | None = None,
) -> Model | None:
    """Draw one assignment from an interval map with select-term keys.

    Integer variables are drawn first; select-like terms follow in
    increasing nesting order of selects inside their index, so inner
    accesses resolve before the terms that use them.  Returns None on a
    clash (slot already pinned outside the required interval)."""
    ints = dict(seed.ints)
    select_keys: list[tuple[int, Term]] = []
    for key, interval in iv.entries.items():
        if isinstance(key, IntVar):
            ints[key.name] = _draw(interval, seed.int_value(key.name), cfg.unbounded_width, rng)
        else:
            depth = sum(1 for t in _subterms(_index_of(key)) if _is_access(t))
            select_keys.append((depth, key))
    select_keys.sort(key=lambda pair: pair[0])

    slots: dict[str, dict[int, int]] = {}
    partial = Model(ints=ints, bools=dict(seed.bools), funcs={})

    def read_slot(sym: str, index: int, term: Term) -> int:
        bucket = slots.setdefault(sym, {})
        if index not in bucket:
            bucket[index] = eval_term(term, seed)  # untouched: complete from the seed
        return bucket[index]

    def eval_completing(t: Term) -> int:
        if _is_access(t):
            index = eval_completing(_index_of(t))
            return read_slot(_symbol_of(t), index, t)
        if isinstance(t, IntConst):
            return t.value
        if isinstance(t, IntVar):
            return partial.int_value(t.name)
        from .terms import Add, Mul, Sub

        if isinstance(t, Add):
            return sum(eval_completing(a) for a in t.args)
        if isinstance(t, Sub):
            return eval_completing(t.lhs) - eval_completing(t.rhs)
        if isinstance(t, Mul):
            prod = 1
            for a in t.args:
                prod *= eval_completing(a)
            return prod
        raise TypeError(f"cannot evaluate term of type {type(t).__name__}")

    try:
        for _, key in select_keys:
            sym = _symbol_of(key)
            index = eval_completing(_index_of(key))
            interval = iv.get(key)
            bucket = slots.setdefault(sym, {})
            if index in bucket:
                if not interval.member(bucket[index]):
                    raise Clash
                continue
            bucket[index] = _draw(interval, eval_term(key, seed), cfg.unbounded_width, rng)
    except Clash:
        return None

    funcs = {}
    for name, fv in seed.funcs.items():
        funcs[name] = FuncValue(fv.default, slots.get(name, {}))
    for name, touched in slots.items():
        if name not in funcs:
            funcs[name] = FuncValue(0, touched)
    sample = Model(ints=ints, bools=dict(seed.bools), funcs=funcs)
    for name, term in reversed(reconstructions or []):
        sample.funcs[name] = eval_term(term, sample)
    return sample


def _is_access(t: Term) -> bool:
    return (isinstance(t, Select) and isinstance(t.array, ArrayVar)) or isinstance(t, FunApp)


def _index_of(t: Term) -> Term:
    return t.index if isinstance(t, Select) else t.arg


def _symbol_of(t: Term) -> str:
    return t.array.name if isinstance(t, Select) else t.fname


def _subterms(t: Term):
    from .terms import term_children

    yield t
    for c in term_children(t):
        yield from _subterms(c)


# ---------------------------------------------------------------------------
# Epoch exploitation


def restrict_to_problem(sample: Model, problem: ParsedProblem) -> Model:
    out = Model()
    for d in problem.declarations:
        if d.is_function or d.sort == Sort.ARRAY:
            fv = sample.funcs.get(d.name, FuncValue(0))
            out.funcs[d.name] = fv.copy()
        elif d.sort == Sort.INT:
            out.ints[d.name] = sample.ints.get(d.name, 0)
        else:
            out.bools[d.name] = sample.bools.get(d.name, False)
    return out


def exploit_epoch(
    iv: IntervalMap,
    aliasing: arrays_mod.AliasingLiterals,
    seed: Model,
    formula: Formula,
    problem: ParsedProblem,
    cfg: SamplerConfig,
    rng: random.Random,
    dedup: DedupSet,
    *,
    use_arrays: bool,
    reconstructions: list[tuple[str, Term]] | None = None,
    deadline: float | None = None,
    remaining_budget: int | None = None,
) -> EpochResult:
    """Run up to n sampling rounds of k draws, stopping early when the rate
    of new unique samples in a round drops below the threshold.  Every
    emitted sample is verified against the input formula."""
    fresh: list[Model] = []
    stats = EpochStats()
    epoch_deadline = time.monotonic() + cfg.epoch_time_limit
    if deadline is not None:
        epoch_deadline = min(epoch_deadline, deadline)
    done = False
    for _ in range(cfg.rounds_per_epoch):
        new_in_round = 0
        for i in range(cfg.samples_per_round):
            if i % 64 == 0 and time.monotonic() > epoch_deadline:
                done = True
                break
            if use_arrays:
                drawn = sample_intervals_arrays(iv, seed, cfg, rng, reconstructions)
                if drawn is None:
                    stats.clashes += 1
                    continue
            else:
                drawn = sample_intervals(iv, seed, cfg, rng)
            sample = restrict_to_problem(drawn, problem)
            if not eval_formula(formula, sample):
                raise SoundnessViolation(
                    f"sample violates the formula: {canonical_assignment(sample)!r}"
                )
            if dedup.add(canonical_assignment(sample)):
                fresh.append(sample)
                new_in_round += 1
                if remaining_budget is not None and len(fresh) >= remaining_budget:
                    done = True
                    break
        stats.rounds_run += 1
        stats.unique_rate = new_in_round / cfg.samples_per_round
        if done or stats.unique_rate < cfg.unique_rate_threshold:
            break
    return EpochResult(seed=seed, intervals=iv, aliasing=aliasing, fresh_samples=fresh, stats=stats)


# ---------------------------------------------------------------------------
# Main loop


def _uses_arrays(problem: ParsedProblem) -> bool:
    return any(d.is_function or d.sort == Sort.ARRAY for d in problem.declarations)


def sample_formula(
    problem: ParsedProblem,
    cfg: SamplerConfig,
    client: SolverClient | None,
    rng: random.Random | None = None,
    on_sample=None,
    on_epoch=None,
) -> RunStats:
    """Sample distinct models of `problem` until a limit is hit.

    `on_sample(model)` fires for every fresh verified sample; `on_epoch`
    receives each EpochResult.  Returns aggregate statistics."""
    rng = rng or random.Random(cfg.rng_seed)
    stats = RunStats()
    phase = {"solve": 0.0, "implicant": 0.0, "strengthen": 0.0, "sample": 0.0}
    t_start = time.monotonic()
    deadline = t_start + cfg.total_time_limit

    formula = to_nnf(preprocess(problem.assertion))
    use_arrays = _uses_arrays(problem)
    dedup = DedupSet(cfg.dedup_cap)
    accumulated: list[IntervalMap] = []
    injected = cfg.inject_seed

    while True:
        if time.monotonic() > deadline:
            stats.stop_reason = "total time limit"
            break
        if cfg.max_samples is not None and stats.unique_samples >= cfg.max_samples:
            stats.stop_reason = "max samples"
            break

        t0 = time.monotonic()
        if injected is not None:
            seed = injected
            injected = None
            if not eval_formula(formula, seed):
                raise NotAModel("injected seed does not satisfy the formula")
        elif client is None:
            stats.stop_reason = "no solver configured"
            break
        elif cfg.strategy == "blocking":
            seed, was_reset, calls = get_seed_blocking(problem, formula, client, accumulated)
            stats.solver_calls += calls
            if was_reset:
                stats.blocking_resets += 1
        else:
            seed, verdict = get_seed_random(problem, formula, client, cfg, rng)
            stats.solver_calls += 1
            if verdict.degraded:
                stats.maxsmt_degradations += 1
        phase["solve"] += time.monotonic() - t0

        t0 = time.monotonic()
        product = compute_implicant(formula, seed, rng)
        phase["implicant"] += time.monotonic() - t0

        t0 = time.monotonic()
        reconstructions: list[tuple[str, Term]] = []
        if use_arrays:
            result = arrays_mod.product_to_intervals(product, seed, rng)
            iv, aliasing, seed = result.intervals, result.aliasing, result.seed
            reconstructions = result.reconstructions
        else:
            iv = strengthen_mod.product_to_intervals(product, seed)
            aliasing = arrays_mod.AliasingLiterals()
        phase["strengthen"] += time.monotonic() - t0

        if not contains(iv, seed):
            raise SoundnessViolation("seed fell outside its own interval box")

        t0 = time.monotonic()
        remaining = None if cfg.max_samples is None else cfg.max_samples - stats.unique_samples
        epoch = exploit_epoch(
            iv,
            aliasing,
            seed,
            formula,
            problem,
            cfg,
            rng,
            dedup,
            use_arrays=use_arrays,
            reconstructions=reconstructions,
            deadline=deadline,
            remaining_budget=remaining,
        )
        phase["sample"] += time.monotonic() - t0

        stats.epochs += 1
        stats.unique_samples += len(epoch.fresh_samples)
        stats.clashes += epoch.stats.clashes
        accumulated.append(iv)
        if on_sample is not None:
            for sample in epoch.fresh_samples:
                on_sample(sample)
        if on_epoch is not None:
            on_epoch(epoch)

    stats.probabilistic_dedup = dedup.probabilistic
    phase["total"] = time.monotonic() - t_start
    stats.wall_time = phase
    return stats
