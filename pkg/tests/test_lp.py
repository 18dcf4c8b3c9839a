import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from instances import random_instance
from kgcep.kg import SPLITS, KnowledgeGraph, TypedDictionary
from kgcep.lp import LPConfig, evaluate_lp, rank_split, rank_triple, summarize_ranks
from kgcep.model import EmbeddingModel, TrainConfig, init_model


def _oracle_ranks(kg, model, triples, config):
    known = set(map(tuple, kg.all_triples().tolist()))
    scope = config.scope_for(model)
    return oracles.lp_ranks(model, kg.dictionary.entity_types, known, triples.tolist(), scope,
                            config.filter_mode == "filtered", config.side_list())


class TestOracleEquivalence:
    @pytest.mark.parametrize("filter_mode", ["raw", "filtered"])
    @pytest.mark.parametrize("scope", [None, "global", "typed"])
    def test_random_instances(self, filter_mode, scope):
        for seed in range(50):
            kg, model, tr = random_instance(seed)
            cfg = LPConfig(candidate_scope=scope, filter_mode=filter_mode, hits_levels=(1, 3, 10))
            expected = np.array(_oracle_ranks(kg, model, tr, cfg))
            rep = evaluate_lp(model, kg, tr, cfg)
            assert np.array_equal(rep.ranks, expected), seed
            flat = expected.ravel()
            assert rep.mrank == pytest.approx(sum(flat) / len(flat), abs=1e-12)
            assert rep.mrr == pytest.approx(sum(1 / r for r in flat) / len(flat), abs=1e-12)
            for n in (1, 3, 10):
                assert rep.hits[n] == pytest.approx(sum(r <= n for r in flat) / len(flat), abs=1e-12)

    def test_hand_fixed_toy(self, toy_kg):
        # 1-D embeddings: a=0, b=1, c=2, d=3, x=0.5, y=2.5 ; hasG = +0.5, links = +1
        d = toy_kg.dictionary
        pos = {"a": 0.0, "b": 1.0, "c": 2.0, "d": 3.0, "x": 0.5, "y": 2.5}
        ent = np.array([[pos[n]] for n in d.entity_names])
        rel = np.array([[0.5], [1.0]])
        model = EmbeddingModel(ent, rel, typed=True)
        tr = toy_kg["LRN"]
        rep = evaluate_lp(model, toy_kg, tr, LPConfig())
        assert np.array_equal(rep.ranks, _oracle_ranks(toy_kg, model, tr, LPConfig()))
        # a -hasG-> x is exact; heads a,b score 0 and 1 -> head rank 1, tail rank 1
        assert rep.ranks[0].tolist() == [1, 1]


class TestRankTriple:
    def test_one_strictly_better(self):
        # head of its own type at 0, zero translation: tail score = value^2
        scores = [0.2, 0.1, 0.5, 0.9]
        d = TypedDictionary(("h", "t0", "t1", "t2", "t3"), (0, 1, 1, 1, 1), (("r", 0, 1),), ("H", "T"))
        ent = np.array([[0.0]] + [[np.sqrt(v)] for v in scores])
        model = EmbeddingModel(ent, np.zeros((1, 1)), typed=True)
        kg = KnowledgeGraph(d, {"LRN": [[0, 0, 1]]})
        assert rank_triple(model, kg, (0, 0, 1), "tail") == 2

    def test_all_tied_pessimistic(self):
        d = TypedDictionary(tuple("abcde"), (0,) * 5, (("r", 0, 0),), ("T",))
        model = EmbeddingModel(np.zeros((5, 2)), np.zeros((1, 2)))
        kg = KnowledgeGraph(d, {"LRN": [[0, 0, 1]]})
        assert rank_triple(model, kg, (0, 0, 1), "tail") == 5

    def test_true_entity_outside_pool(self):
        d = TypedDictionary(("a", "x"), (0, 1), (("r", 0, 1),), ("P", "G"))
        model = EmbeddingModel(np.zeros((2, 1)), np.zeros((1, 1)), typed=True)
        kg = KnowledgeGraph(d, {"LRN": [[0, 0, 1]]})
        with pytest.raises(ValueError, match="pool"):
            rank_triple(model, kg, (0, 0, 0), "tail")


class TestReport:
    def test_perfect(self):
        assert summarize_ranks([1, 1, 1]) == (1.0, 1.0, {10: 1.0})

    def test_two_ranks(self):
        mrank, mrr, hits = summarize_ranks([1, 4], (1, 3, 10))
        assert (mrank, mrr) == (2.5, 0.625)
        assert hits == {1: 0.5, 3: 0.5, 10: 1.0}

    def test_empty_split(self, toy_kg):
        model = init_model(6, 2, TrainConfig(k=2), 0)
        with pytest.raises(ValueError, match="empty"):
            evaluate_lp(model, toy_kg, "TST")

    def test_json_and_csv(self, toy_kg):
        model = init_model(6, 2, TrainConfig(k=2), 0)
        rep = evaluate_lp(model, toy_kg, "LRN")
        assert set(rep.to_dict()) == {"mrank", "mrr", "hits", "count", "per_relation"}
        assert rep.count == 12
        assert sum(v["count"] for v in rep.per_relation.values()) == 12
        assert rep.csv_row("h").split(",") == ["h", repr(rep.mrank), repr(rep.mrr), repr(rep.hits[10])]

    @pytest.mark.parametrize("kw", [{"candidate_scope": "local"}, {"filter_mode": "x"}, {"sides": "left"},
                                    {"hits_levels": ()}, {"hits_levels": (0,)}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            LPConfig(**kw)

    def test_sides(self, toy_kg):
        model = init_model(6, 2, TrainConfig(k=2), 0)
        both = rank_split(model, toy_kg, toy_kg["LRN"], LPConfig())
        head = rank_split(model, toy_kg, toy_kg["LRN"], LPConfig(sides="head"))
        tail = rank_split(model, toy_kg, toy_kg["LRN"], LPConfig(sides="tail"))
        assert np.array_equal(both, np.hstack([head, tail]))


class TestInvariants:
    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_hits_monotone_and_bounds(self, seed):
        kg, model, tr = random_instance(seed)
        rep = evaluate_lp(model, kg, tr, LPConfig(hits_levels=(1, 2, 5, 10)))
        h = [rep.hits[n] for n in (1, 2, 5, 10)]
        assert h == sorted(h)
        assert rep.mrank >= 1 and 0 < rep.mrr <= 1

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_filtered_not_worse(self, seed):
        kg, model, tr = random_instance(seed)
        raw = rank_split(model, kg, tr, LPConfig())
        filt = rank_split(model, kg, tr, LPConfig(filter_mode="filtered"))
        assert np.all(filt <= raw)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_adding_candidate_never_improves(self, seed):
        kg, model, tr = random_instance(seed)
        d = kg.dictionary
        rng = np.random.default_rng(seed)
        new_type = int(rng.integers(d.n_types))
        d2 = TypedDictionary(d.entity_names + ("extra",), d.entity_types + (new_type,), d.relations, d.type_names)
        kg2 = KnowledgeGraph(d2, kg.splits)
        m2 = EmbeddingModel(np.vstack([model.entities, rng.normal(size=(1, model.k))]), model.relations,
                            model.normals, model.model_kind, model.typed)
        cfg = LPConfig()
        assert np.all(rank_split(m2, kg2, tr, cfg) >= rank_split(model, kg, tr, cfg))

    @given(st.integers(0, 10_000), st.floats(0.1, 10))
    @settings(max_examples=40, deadline=None)
    def test_scaling_embeddings_keeps_ranks(self, seed, c):
        # scaling every vector by c multiplies every score by c^2, a strictly increasing map
        kg, model, tr = random_instance(seed, kind="transE")
        c = 2.0 ** round(np.log2(c))  # powers of two keep the arithmetic exact
        scaled = EmbeddingModel(model.entities * c, model.relations * c, typed=model.typed)
        cfg = LPConfig()
        assert np.array_equal(rank_split(scaled, kg, tr, cfg), rank_split(model, kg, tr, cfg))

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_typed_candidates_share_type(self, seed):
        # forcing every other-type entity to score perfectly must not change typed ranks
        kg, model, tr = random_instance(seed, kind="transE")
        types = np.asarray(kg.dictionary.entity_types)
        cfg = LPConfig(candidate_scope="typed", sides="tail")
        base = rank_split(model, kg, tr, cfg)
        for row, (h, r, t) in enumerate(tr.tolist()):
            m = EmbeddingModel(model.entities.copy(), model.relations, typed=True)
            other = types != types[t]
            m.entities[other] = model.entities[h] + model.relations[r]
            if other[h]:
                continue
            assert rank_split(m, kg, tr[row:row + 1], cfg)[0, 0] == base[row, 0]
