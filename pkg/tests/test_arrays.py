"""Array pipeline: select-store elimination, equality rewriting, aliasing,
grounding, and the composed reduction."""

import itertools
import random

import pytest

from boxsampler.arrays import (
    GroundingTable,
    build_aliasing,
    eliminate_select_store,
    ground,
    ground_formula,
    ground_model,
    product_to_intervals,
    rewrite_array_equality,
    unground,
)
from boxsampler.errors import NoWitness, UnknownGroundVar
from boxsampler.intervals import Interval, IntervalMap, contains
from boxsampler.strengthen import product_to_intervals as int_product_to_intervals
from boxsampler.terms import (
    Add,
    ArrayVar,
    Atom,
    FunApp,
    FuncValue,
    IntConst,
    IntVar,
    Model,
    Mul,
    Rel,
    Select,
    Sort,
    Store,
    eval_formula,
    eval_term,
    sort_of,
)
from oracle import (
    env_of_model,
    o_formula,
    random_array_formula,
    random_array_model,
)

A, B = ArrayVar("a"), ArrayVar("b")
I, J, X = IntVar("i"), IntVar("j"), IntVar("x")


def _model(ints=None, arrays=None):
    return Model(
        ints=dict(ints or {}),
        funcs={k: FuncValue(*v) for k, v in (arrays or {}).items()},
    )


class TestEliminateSelectStore:
    def test_aliased_branch(self):
        lit = Atom(Rel.LE, Select(Store(A, I, IntConst(7)), J), IntConst(9))
        m = _model(ints={"i": 3, "j": 3}, arrays={"a": (0, {})})
        out = eliminate_select_store([lit], m, random.Random(0))
        assert Atom(Rel.EQ, I, J) in out
        assert Atom(Rel.LE, IntConst(7), IntConst(9)) in out

    def test_missed_branch(self):
        lit = Atom(Rel.LE, Select(Store(A, I, IntConst(7)), J), IntConst(9))
        m = _model(ints={"i": 3, "j": 4}, arrays={"a": (0, {})})
        out = eliminate_select_store([lit], m, random.Random(0))
        assert Atom(Rel.NE, I, J) in out
        assert Atom(Rel.LE, Select(A, J), IntConst(9)) in out

    def test_no_select_store_left(self):
        lit = Atom(Rel.LE, Select(Store(Store(A, I, IntConst(1)), J, IntConst(2)), X), IntConst(5))
        for seed in range(5):
            m = _model(
                ints={"i": seed % 3 - 1, "j": (seed + 1) % 3 - 1, "x": seed % 2},
                arrays={"a": (0, {})},
            )
            if not eval_formula(lit, m):
                continue
            out = eliminate_select_store([lit], m, random.Random(seed))
            for produced in out:
                assert _count_select_store(produced) == 0

    def test_nested_double_store_implies_original(self):
        rng = random.Random(17)
        lit = Atom(
            Rel.LE,
            Select(Store(Store(A, I, X), J, IntConst(2)), IntVar("k")),
            IntConst(3),
        )
        names = ["i", "j", "k", "x"]
        cases = 0
        while cases < 60:
            m = _model(
                ints={n: rng.randint(-2, 2) for n in names},
                arrays={"a": (rng.randint(-2, 2), {rng.randint(-2, 2): rng.randint(-2, 2)})},
            )
            if not eval_formula(lit, m):
                continue
            cases += 1
            out = eliminate_select_store([lit], m, rng)
            # every produced literal is satisfied by m
            for produced in out:
                assert eval_formula(produced, m)
            # conjunction implies the original over a small grid of models
            for point in itertools.product(range(-2, 3), repeat=4):
                for default in (-1, 0, 1):
                    pm = _model(
                        ints=dict(zip(names, point)),
                        arrays={"a": (default, {0: 1})},
                    )
                    if all(eval_formula(l, pm) for l in out):
                        assert eval_formula(lit, pm)


def _count_select_store(f) -> int:
    from boxsampler.terms import iter_subterms

    return sum(
        1
        for t in iter_subterms(f)
        if isinstance(t, Select) and isinstance(t.array, Store)
    )


class TestRewriteArrayEquality:
    def test_single_store_equality_example(self):
        # store(a,0,5) = b: fresh c with a = store(c,0,u), b = c, select(c,0) = 5
        lit = Atom(Rel.EQ, Store(A, IntConst(0), IntConst(5)), B)
        m = _model(arrays={"a": (0, {}), "b": (0, {0: 5})})
        out, m2, recipes = rewrite_array_equality([lit], m)
        select_lits = [l for l in out if isinstance(l.lhs, Select)]
        assert len(select_lits) == 1
        sel = select_lits[0]
        assert sel.rel == Rel.EQ and sel.rhs == IntConst(5)
        assert isinstance(sel.lhs.array, ArrayVar) and sel.lhs.index == IntConst(0)
        fresh_c = sel.lhs.array.name
        assert fresh_c in m2.funcs
        assert dict(recipes)["a"].array == ArrayVar(fresh_c)
        assert dict(recipes)["b"] == ArrayVar(fresh_c)
        for l in out:
            assert eval_formula(l, m2)

    def test_plain_equality_both_replaced(self):
        other = Atom(Rel.LE, Select(A, I), IntConst(4))
        lit = Atom(Rel.EQ, A, B)
        m = _model(ints={"i": 1}, arrays={"a": (2, {}), "b": (2, {})})
        out, m2, recipes = rewrite_array_equality([lit, other], m)
        recipe_map = dict(recipes)
        assert recipe_map["a"] == recipe_map["b"]
        # the other literal now reads through the fresh array
        (rewritten,) = [l for l in out if l.rel == Rel.LE]
        assert rewritten.lhs.array == recipe_map["a"]

    def test_disequality_witness_in_exceptions(self):
        lit = Atom(Rel.NE, A, B)
        m = _model(arrays={"a": (0, {}), "b": (0, {3: 1})})
        out, m2, _ = rewrite_array_equality([lit], m)
        (w_lit,) = out
        assert w_lit == Atom(Rel.NE, Select(A, IntConst(3)), Select(B, IntConst(3)))

    def test_disequality_witness_from_defaults(self):
        lit = Atom(Rel.NE, A, B)
        m = _model(arrays={"a": (0, {5: 9}), "b": (1, {5: 9})})
        out, _, _ = rewrite_array_equality([lit], m)
        (w_lit,) = out
        # witness index must avoid the shared exception at 5
        assert w_lit.lhs.index == IntConst(6)

    def test_no_witness_is_contract_violation(self):
        lit = Atom(Rel.NE, A, B)
        m = _model(arrays={"a": (0, {1: 2}), "b": (0, {1: 2})})
        with pytest.raises(NoWitness):
            rewrite_array_equality([lit], m)

    def test_same_base_equality_becomes_select_agreement(self):
        lhs = Store(A, I, IntConst(1))
        rhs = Store(A, J, IntConst(1))
        m = _model(ints={"i": 2, "j": 2}, arrays={"a": (0, {})})
        out, m2, recipes = rewrite_array_equality([Atom(Rel.EQ, lhs, rhs)], m)
        assert recipes == []
        assert all(sort_of(l.lhs) == Sort.INT for l in out)
        for l in out:
            assert eval_formula(l, m2)

    def test_rewrite_preserves_m_approximation_exhaustively(self):
        rng = random.Random(23)
        cases = 0
        while cases < 40:
            chain_len = rng.randint(0, 2)
            lhs = A
            for _ in range(chain_len):
                lhs = Store(lhs, IntConst(rng.randint(-1, 1)), IntConst(rng.randint(-1, 1)))
            rhs = B
            if rng.random() < 0.5:
                rhs = Store(rhs, IntConst(rng.randint(-1, 1)), IntConst(rng.randint(-1, 1)))
            lit = Atom(Rel.EQ, lhs, rhs)
            exceptions = {rng.randint(-1, 1): rng.randint(-1, 1)}
            m = _model(arrays={"a": (rng.randint(-1, 1), exceptions), "b": (0, {})})
            m.funcs["b"] = eval_term(lhs, m).copy()  # force the equality to hold
            if not eval_formula(lit, m):
                continue
            cases += 1
            out, m2, recipes = rewrite_array_equality([lit], m)
            for l in out:
                assert eval_formula(l, m2), (lit, l)


class TestBuildAliasing:
    def test_equal_indices_get_equalities(self):
        p = [Atom(Rel.LE, Select(A, I), IntConst(5)), Atom(Rel.GE, Select(A, J), IntConst(0))]
        m = _model(ints={"i": 3, "j": 3}, arrays={"a": (1, {})})
        out = build_aliasing(p, m)
        assert out.equalities and not out.disequalities
        (pair,) = out.equalities
        assert pair[0] == (I, J)
        literals = out.literals()
        assert Atom(Rel.EQ, I, J) in literals
        assert Atom(Rel.EQ, Select(A, I), Select(A, J)) in literals

    def test_distinct_indices_get_disequalities(self):
        p = [Atom(Rel.LE, Select(A, I), IntConst(5)), Atom(Rel.GE, Select(A, J), IntConst(0))]
        m = _model(ints={"i": 1, "j": 2}, arrays={"a": (1, {})})
        out = build_aliasing(p, m)
        assert out.disequalities == [(I, J)] and not out.equalities

    def test_single_select_empty(self):
        p = [Atom(Rel.LE, Select(A, I), IntConst(5))]
        m = _model(ints={"i": 0}, arrays={"a": (0, {})})
        out = build_aliasing(p, m)
        assert not out.equalities and not out.disequalities

    def test_different_arrays_not_paired(self):
        p = [Atom(Rel.LE, Select(A, I), IntConst(5)), Atom(Rel.GE, Select(B, I), IntConst(0))]
        m = _model(ints={"i": 0}, arrays={"a": (0, {}), "b": (0, {})})
        out = build_aliasing(p, m)
        assert not out.equalities and not out.disequalities

    def test_function_applications_alias_too(self):
        p = [
            Atom(Rel.LE, FunApp("f", I), IntConst(5)),
            Atom(Rel.GE, FunApp("f", J), IntConst(0)),
        ]
        m = Model(ints={"i": 2, "j": 2}, funcs={"f": FuncValue(0)})
        out = build_aliasing(p, m)
        assert out.equalities

    def test_all_emitted_literals_satisfied_by_model(self):
        rng = random.Random(5)
        for _ in range(50):
            m = random_array_model(rng, ["i", "j", "x"], ["a"], ["f"])
            p = [
                Atom(Rel.LE, Select(A, I), IntConst(9)),
                Atom(Rel.LE, Select(A, J), IntConst(9)),
                Atom(Rel.LE, FunApp("f", X), IntConst(9)),
                Atom(Rel.LE, FunApp("f", Add((I, J))), IntConst(9)),
            ]
            for lit in build_aliasing(p, m).literals():
                assert eval_formula(lit, m)


class TestGrounding:
    def test_single_replacement(self):
        p = [Atom(Rel.LE, Select(A, I), IntConst(5))]
        m = _model(ints={"i": 2}, arrays={"a": (0, {2: 3})})
        grounded, gm, table = ground(p, m)
        (lit,) = grounded
        assert isinstance(lit.lhs, IntVar)
        assert gm.ints[lit.lhs.name] == 3
        assert gm.ints["i"] == 2
        assert not gm.funcs

    def test_nested_select_keyed_on_original_term(self):
        inner = Select(B, IntVar("k"))
        outer = Select(A, inner)
        p = [Atom(Rel.GE, outer, IntConst(0))]
        m = _model(ints={"k": 1}, arrays={"a": (4, {}), "b": (0, {})})
        grounded, gm, table = ground(p, m)
        assert outer in table.by_term
        assert inner in table.by_term  # registered for the grounded model
        (lit,) = grounded
        assert lit.lhs == IntVar(table.by_term[outer])
        assert gm.ints[table.by_term[inner]] == 0
        assert gm.ints[table.by_term[outer]] == 4

    def test_grounding_fidelity_randomized(self):
        rng = random.Random(41)
        int_names, arr_names, fn_names = ["i", "j"], ["a", "b"], ["f"]
        checked_true = checked_false = 0
        for _ in range(250):
            f = random_array_formula(rng, int_names, arr_names, fn_names, 2)
            m = random_array_model(rng, int_names, arr_names, fn_names)
            table = GroundingTable()
            gf = ground_formula(f, table)
            gm = ground_model(m, table)
            original = eval_formula(f, m)
            grounded = eval_formula(gf, gm)
            assert original == grounded
            checked_true += original
            checked_false += not original
        assert checked_true > 20 and checked_false > 20  # both directions exercised

    def test_unground_round_trip(self):
        p = [Atom(Rel.LE, Select(A, I), IntConst(5)), Atom(Rel.GE, I, IntConst(0))]
        m = _model(ints={"i": 2}, arrays={"a": (0, {})})
        grounded, gm, table = ground(p, m)
        iv = int_product_to_intervals(grounded, gm)
        restored = unground(iv, table)
        assert set(restored.entries) == {Select(A, I), I}

    def test_unground_mixed_keeps_plain_vars(self):
        table = GroundingTable()
        name = table.var_for(Select(A, I))
        iv = IntervalMap({IntVar(name): Interval(0, 5), X: Interval(1, 2)})
        restored = unground(iv, table)
        assert restored.get(Select(A, I)) == Interval(0, 5)
        assert restored.get(X) == Interval(1, 2)

    def test_unknown_ground_var_rejected(self):
        iv = IntervalMap({IntVar("!g99"): Interval(0, 1)})
        with pytest.raises(UnknownGroundVar):
            unground(iv, GroundingTable())


class TestFullPipeline:
    def test_array_free_reduces_to_integer_pipeline(self):
        product = [
            Atom(Rel.LE, Add((X, Mul((IntConst(-5), I)))), IntConst(7)),
            Atom(Rel.GE, X, IntConst(0)),
        ]
        m = Model(ints={"x": 12, "i": 2})
        res = product_to_intervals(product, m, random.Random(0))
        assert res.intervals.entries == int_product_to_intervals(product, m).entries
        assert res.reconstructions == []

    def test_select_bounds_and_samples_satisfy(self):
        product = [
            Atom(Rel.LE, Select(A, I), IntConst(5)),
            Atom(Rel.GE, I, IntConst(0)),
        ]
        m = _model(ints={"i": 2}, arrays={"a": (0, {})})
        res = product_to_intervals(product, m, random.Random(0))
        assert contains(res.intervals, m)
        sel_interval = res.intervals.get(Select(A, I))
        assert sel_interval.hi is not None and sel_interval.hi <= 5
        assert sel_interval.member(0)

    def test_aliased_selects_pinned_to_shared_value(self):
        product = [
            Atom(Rel.LE, Select(A, I), IntConst(9)),
            Atom(Rel.LE, Select(A, J), IntConst(9)),
        ]
        m = _model(ints={"i": 3, "j": 3}, arrays={"a": (4, {})})
        res = product_to_intervals(product, m, random.Random(0))
        assert res.intervals.get(Select(A, I)) == Interval(4, 4)
        assert res.intervals.get(Select(A, J)) == Interval(4, 4)
        assert res.intervals.get(I) == Interval(3, 3)
        assert res.intervals.get(J) == Interval(3, 3)

    def test_end_to_end_m_approximation_small_grid(self):
        # every point of the produced box satisfies the product term
        rng = random.Random(71)
        cases = 0
        while cases < 30:
            m = random_array_model(rng, ["i", "j"], ["a"], [])
            product = []
            for _ in range(rng.randint(1, 2)):
                lhs = Select(A, rng.choice([I, J]))
                value = eval_term(lhs, m)
                product.append(Atom(Rel.LE, lhs, IntConst(value + rng.randint(0, 3))))
            product.append(Atom(Rel.GE, I, IntConst(m.ints["i"] - rng.randint(0, 2))))
            if not all(eval_formula(l, m) for l in product):
                continue
            cases += 1
            res = product_to_intervals(product, m, rng)
            assert contains(res.intervals, res.seed)
            # enumerate the clipped box over every keyed leaf
            keys = list(res.intervals.entries)
            ranges = []
            for key in keys:
                interval = res.intervals.get(key)
                lo = interval.lo if interval.lo is not None else -3
                hi = interval.hi if interval.hi is not None else 3
                lo, hi = max(lo, -3), min(hi, 3)
                if lo > hi:
                    ranges.append([])
                else:
                    ranges.append(range(lo, hi + 1))
            for point in itertools.product(*ranges):
                assignment = dict(zip(keys, point))
                pm = _grid_model(assignment, res.seed)
                if pm is None:
                    continue
                for lit in product:
                    assert eval_formula(lit, pm)


def _grid_model(assignment, seed):
    """Build a full model realizing the given leaf values, when consistent."""
    pm = Model(ints=dict(seed.ints), funcs={n: f.copy() for n, f in seed.funcs.items()})
    for key, value in assignment.items():
        if isinstance(key, IntVar):
            pm.ints[key.name] = value
    for key, value in assignment.items():
        if isinstance(key, Select):
            idx = eval_term(key.index, pm)
            current = pm.funcs[key.array.name]
            if current.apply(idx) != value:
                pm.funcs[key.array.name] = current.with_store(idx, value)
    # the rewrite may be inconsistent when two aliased keys demand different
    # values; aliasing literals prevent that inside the box, so re-check
    for key, value in assignment.items():
        if isinstance(key, Select) and eval_term(key, pm) != value:
            return None
    return pm
