"""Edge construction vs an independent brute-force implementation."""

from collections import Counter

import numpy as np
import pytest

from clickgraph.errors import ContractViolation
from clickgraph.graph_edges import (
    Edge,
    EdgeConfig,
    EdgeKind,
    EntityType,
    build_all_edges,
    build_i2i_edges,
    build_q2i_edges,
    build_q2q_edges,
    segment_query_sessions,
)
from clickgraph.ingest import derive_seeds_seq

from conftest import click, query, make_sample


def edge_tuples(edges):
    return [(e.kind.value, e.anchor_id, e.positive_id) for e in edges]


# ---------------------------------------------------------------------------
# independent brute-force oracle: literal O(n^2) all-pairs rule application


def brute_i2i(source, w):
    out = []
    for j in range(len(source)):
        for k in range(len(source)):
            if j == k or abs(j - k) > w:
                continue
            if source[j].entity_id == source[k].entity_id:
                continue
            out.append(("i2i", source[j].entity_id, source[k].entity_id))
    return out


def brute_sessions(queries, gap):
    sessions = []
    current = []
    for q in queries:
        if current and (q.timestamp - current[-1].timestamp > gap
                        or not (q.categories & current[-1].categories)):
            sessions.append(current)
            current = []
        current.append(q)
    if current:
        sessions.append(current)
    return sessions


def brute_q2q(queries, gap):
    out = []
    for session in brute_sessions(queries, gap):
        ids = sorted({q.entity_id for q in session})
        for a in ids:
            for b in ids:
                if a != b:
                    out.append(("q2q", a, b))
    return out


def brute_q2i(queries, clicks, timespan, symmetric):
    out = []
    for q in queries:
        for c in clicks:
            dt = c.timestamp - q.timestamp
            ok = 0 < abs(dt) < timespan if symmetric else 0 < dt < timespan
            if ok and (q.categories & c.categories):
                out.append(("q2i", q.entity_id, c.entity_id))
                out.append(("q2i", c.entity_id, q.entity_id))
    return out


def brute_all(sample, cfg, use_seeds):
    source = sample.seeds_seq if use_seeds else sample.click_seq
    return (brute_i2i(source, cfg.window_size)
            + brute_q2q(sample.query_seq, cfg.session_gap)
            + brute_q2i(sample.query_seq, sample.click_seq,
                        cfg.q2i_timespan, cfg.symmetric_q2i_time))


def random_sample(rng, max_len=8):
    events_clicks, events_queries = [], []
    t = 0
    for _ in range(int(rng.integers(0, max_len + 1))):
        t += int(rng.integers(1, 50))
        cats = frozenset(int(c) for c in rng.choice(5, size=int(rng.integers(1, 3)),
                                                    replace=False))
        if rng.random() < 0.6:
            events_clicks.append(click(int(rng.integers(6)), t, cats))
        else:
            events_queries.append(query(int(rng.integers(6)), t, cats))
    q = query(77, t + 1, cats=(0, 1, 2, 3, 4))
    sample = make_sample(events_clicks, events_queries,
                         target=click(99, t + 2), current_query=q,
                         seeds_seq=derive_seeds_seq(events_clicks, q))
    return sample


class TestI2I:
    def test_window_two_three_clicks(self, rng):
        clicks = [click(10, 1), click(20, 2), click(30, 3)]
        cfg = EdgeConfig(window_size=2, seeds_mix_rate=0.0)
        got = edge_tuples(build_i2i_edges(clicks, [], cfg, rng))
        expected = {("i2i", 10, 20), ("i2i", 20, 10), ("i2i", 10, 30),
                    ("i2i", 30, 10), ("i2i", 20, 30), ("i2i", 30, 20)}
        assert Counter(got) == Counter(expected)

    def test_single_click_empty(self, rng):
        cfg = EdgeConfig(seeds_mix_rate=0.0)
        assert build_i2i_edges([click(1, 1)], [], cfg, rng) == []

    def test_self_pair_dropped(self, rng):
        clicks = [click(5, 1), click(5, 2), click(7, 3)]
        cfg = EdgeConfig(window_size=1, seeds_mix_rate=0.0)
        got = edge_tuples(build_i2i_edges(clicks, [], cfg, rng))
        assert Counter(got) == Counter([("i2i", 5, 7), ("i2i", 7, 5)])

    def test_repeated_cooccurrence_kept_as_multiset(self, rng):
        clicks = [click(1, 1), click(2, 2), click(1, 3)]
        cfg = EdgeConfig(window_size=1, seeds_mix_rate=0.0)
        got = Counter(edge_tuples(build_i2i_edges(clicks, [], cfg, rng)))
        assert got[("i2i", 1, 2)] == 2 and got[("i2i", 2, 1)] == 2

    def test_mix_rate_one_uses_seeds(self, rng):
        clicks = [click(1, 1), click(2, 2)]
        seeds = [click(8, 1), click(9, 2)]
        cfg = EdgeConfig(window_size=1, seeds_mix_rate=1.0)
        got = edge_tuples(build_i2i_edges(clicks, seeds, cfg, rng))
        assert Counter(got) == Counter([("i2i", 8, 9), ("i2i", 9, 8)])

    def test_mix_rate_bernoulli_fraction(self):
        clicks = [click(1, 1), click(2, 2)]
        seeds = [click(8, 1), click(9, 2)]
        cfg = EdgeConfig(window_size=1, seeds_mix_rate=0.2)
        rng = np.random.default_rng(0)
        used_seeds = 0
        for _ in range(5000):
            edges = build_i2i_edges(clicks, seeds, cfg, rng)
            used_seeds += edges[0].anchor_id == 8
        assert abs(used_seeds / 5000 - 0.2) < 0.02


class TestSessions:
    def test_one_session_when_compatible(self):
        qs = [query(1, 0, cats=(1,)), query(2, 100, cats=(1,)), query(3, 200, cats=(1,))]
        cfg = EdgeConfig(session_gap=1000)
        assert segment_query_sessions(qs, cfg) == [qs]

    def test_large_gaps_make_singletons(self):
        qs = [query(1, 0), query(2, 5000), query(3, 10000)]
        cfg = EdgeConfig(session_gap=1000)
        assert segment_query_sessions(qs, cfg) == [[qs[0]], [qs[1]], [qs[2]]]

    def test_category_break_splits(self):
        qs = [query(1, 0, cats=(1,)), query(2, 10, cats=(1,)), query(3, 20, cats=(2,))]
        cfg = EdgeConfig(session_gap=1000)
        assert segment_query_sessions(qs, cfg) == [[qs[0], qs[1]], [qs[2]]]

    def test_gap_equal_to_threshold_keeps_session(self):
        qs = [query(1, 0), query(2, 1000)]
        cfg = EdgeConfig(session_gap=1000)
        assert segment_query_sessions(qs, cfg) == [qs]

    def test_every_query_in_exactly_one_session(self, rng):
        qs = [query(int(rng.integers(9)), int(t), cats=(int(rng.integers(3)),))
              for t in np.cumsum(rng.integers(1, 3000, size=30))]
        cfg = EdgeConfig(session_gap=800)
        sessions = segment_query_sessions(qs, cfg)
        flat = [q for s in sessions for q in s]
        assert flat == qs


class TestQ2Q:
    def test_three_distinct_queries_six_edges(self):
        session = [[query(1, 0), query(2, 1), query(3, 2)]]
        assert len(build_q2q_edges(session)) == 6

    def test_singleton_session_empty(self):
        assert build_q2q_edges([[query(1, 0)]]) == []

    def test_repeated_id_no_self_edge(self):
        assert build_q2q_edges([[query(1, 0), query(1, 5)]]) == []

    def test_count_formula(self, rng):
        # sum over sessions of n_distinct * (n_distinct - 1)
        sessions = []
        expected = 0
        t = 0
        for _ in range(5):
            size = int(rng.integers(1, 5))
            session = []
            for _ in range(size):
                t += 1
                session.append(query(int(rng.integers(6)), t))
            sessions.append(session)
            n = len({q.entity_id for q in session})
            expected += n * (n - 1)
        assert len(build_q2q_edges(sessions)) == expected


class TestQ2I:
    def test_within_span_same_category(self):
        qs = [query(1, 100, cats=(3,))]
        cs = [click(2, 150, cats=(3,))]
        cfg = EdgeConfig(q2i_timespan=100)
        got = edge_tuples(build_q2i_edges(qs, cs, cfg))
        assert got == [("q2i", 1, 2), ("q2i", 2, 1)]

    def test_disjoint_categories_no_edge(self):
        qs = [query(1, 100, cats=(3,))]
        cs = [click(2, 150, cats=(4,))]
        cfg = EdgeConfig(q2i_timespan=100)
        assert build_q2i_edges(qs, cs, cfg) == []

    def test_click_before_query_depends_on_symmetry(self):
        qs = [query(1, 150, cats=(3,))]
        cs = [click(2, 100, cats=(3,))]
        asymmetric = EdgeConfig(q2i_timespan=100, symmetric_q2i_time=False)
        symmetric = EdgeConfig(q2i_timespan=100, symmetric_q2i_time=True)
        assert build_q2i_edges(qs, cs, asymmetric) == []
        assert len(build_q2i_edges(qs, cs, symmetric)) == 2

    def test_zero_and_full_span_excluded(self):
        cfg = EdgeConfig(q2i_timespan=50)
        qs = [query(1, 100, cats=(3,))]
        assert build_q2i_edges(qs, [click(2, 100, cats=(3,))], cfg) == []
        assert build_q2i_edges(qs, [click(2, 150, cats=(3,))], cfg) == []

    def test_mirrored_edge_types(self):
        qs = [query(1, 100, cats=(3,))]
        cs = [click(2, 150, cats=(3,))]
        cfg = EdgeConfig(q2i_timespan=100)
        forward, backward = build_q2i_edges(qs, cs, cfg)
        assert (forward.anchor_type, forward.positive_type) == (
            EntityType.QUERY, EntityType.ITEM)
        assert (backward.anchor_type, backward.positive_type) == (
            EntityType.ITEM, EntityType.QUERY)


class TestEdgeType:
    def test_self_edge_rejected(self):
        with pytest.raises(ContractViolation):
            Edge(EdgeKind.I2I, 1, 1, EntityType.ITEM, EntityType.ITEM)

    def test_type_combo_enforced(self):
        with pytest.raises(ContractViolation):
            Edge(EdgeKind.I2I, 1, 2, EntityType.QUERY, EntityType.ITEM)


class TestBuildAll:
    def test_empty_sample(self, rng):
        sample = make_sample([], [])
        assert build_all_edges(sample, EdgeConfig(), rng) == []

    def test_clicks_only_all_i2i(self, rng):
        sample = make_sample([click(1, 1), click(2, 2)], [])
        cfg = EdgeConfig(seeds_mix_rate=0.0)
        edges = build_all_edges(sample, cfg, rng)
        assert edges and all(e.kind == EdgeKind.I2I for e in edges)

    def test_kind_order_is_i2i_q2q_q2i(self, rng):
        sample = make_sample(
            [click(1, 10, cats=(1,)), click(2, 20, cats=(1,))],
            [query(5, 15, cats=(1,)), query(6, 25, cats=(1,))],
        )
        cfg = EdgeConfig(seeds_mix_rate=0.0, q2i_timespan=1000)
        kinds = [e.kind for e in build_all_edges(sample, cfg, rng)]
        boundaries = [kinds.index(k) for k in (EdgeKind.I2I, EdgeKind.Q2Q, EdgeKind.Q2I)]
        assert boundaries == sorted(boundaries)

    def test_mirror_always_present(self, rng):
        for trial in range(50):
            sample = random_sample(np.random.default_rng(trial))
            edges = build_all_edges(sample, EdgeConfig(seeds_mix_rate=0.5), rng)
            count = Counter((e.kind, e.anchor_id, e.positive_id, e.anchor_type)
                            for e in edges)
            for e in edges:
                mirrored = (e.kind, e.positive_id, e.anchor_id, e.positive_type)
                assert count[mirrored] >= 1

    def test_i2i_bound(self, rng):
        for trial in range(50):
            trial_rng = np.random.default_rng(100 + trial)
            sample = random_sample(trial_rng)
            w = int(trial_rng.integers(1, 4))
            cfg = EdgeConfig(window_size=w, seeds_mix_rate=0.0)
            edges = build_i2i_edges(sample.click_seq, sample.seeds_seq, cfg, rng)
            assert len(edges) <= 2 * w * max(len(sample.click_seq), 1)

    def test_deterministic_for_fixed_seed(self):
        sample = random_sample(np.random.default_rng(3))
        cfg = EdgeConfig(seeds_mix_rate=0.5)
        a = build_all_edges(sample, cfg, np.random.default_rng(9))
        b = build_all_edges(sample, cfg, np.random.default_rng(9))
        assert a == b

    def test_brute_force_equivalence_randomized(self):
        # mixed sequences of length <= 8, random windows/gaps/timespans
        for trial in range(300):
            trial_rng = np.random.default_rng(1000 + trial)
            sample = random_sample(trial_rng)
            use_seeds = bool(trial_rng.integers(2))
            cfg = EdgeConfig(
                window_size=int(trial_rng.integers(1, 4)),
                session_gap=float(trial_rng.integers(10, 200)),
                q2i_timespan=float(trial_rng.integers(10, 200)),
                seeds_mix_rate=1.0 if use_seeds else 0.0,
                symmetric_q2i_time=bool(trial_rng.integers(2)),
            )
            got = edge_tuples(build_all_edges(sample, cfg, np.random.default_rng(0)))
            expected = brute_all(sample, cfg, use_seeds)
            assert Counter(got) == Counter(expected), f"trial {trial}"

    def test_figure_style_hand_enumeration(self, rng):
        # 6-item click chain, three query sessions of sizes 2/3/1, plus
        # crafted q2i matches; counts checked against hand arithmetic
        clicks = [click(10 + i, 100 + 10 * i, cats=(1,)) for i in range(6)]
        queries = [
            query(50, 101, cats=(1,)), query(51, 111, cats=(1,)),   # session 1
            query(60, 5000, cats=(2,)), query(61, 5010, cats=(2,)), # session 2
            query(62, 5020, cats=(2,)),
            query(70, 9000, cats=(3,)),                             # session 3
        ]
        cfg = EdgeConfig(window_size=2, session_gap=1000, q2i_timespan=35,
                         seeds_mix_rate=0.0)
        sample = make_sample(clicks, queries, target=click(99, 10000),
                             current_query=query(88, 9500, cats=(1,)))
        edges = build_all_edges(sample, cfg, rng)
        by_kind = Counter(e.kind for e in edges)
        # i2i: window 2 over 6 items -> (5 + 4) unordered pairs, both ways
        assert by_kind[EdgeKind.I2I] == 2 * (5 + 4)
        # q2q: 2*1 + 3*2 + 0 ordered pairs
        assert by_kind[EdgeKind.Q2Q] == 2 + 6
        # q2i: query 50 (t=101) reaches clicks at 100,110,120,130 (|dt|<35
        # fails for 140,150); query 51 (t=111) reaches 100..140; others
        # share no category or are out of range
        assert by_kind[EdgeKind.Q2I] == 2 * (4 + 5)
