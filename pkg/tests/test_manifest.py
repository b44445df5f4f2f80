import copy
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from physaudit.manifest import ManifestError, discover_generations, load_manifest, parse_manifest

MINIMAL = {
    "clips": [
        {"id": "a", "audio_path": "a.wav", "hits": [0.5, 1.0], "duration": 2.0},
        {"id": "b", "audio_path": "b.wav", "hits": {"times": [0.4, 0.9, 1.5], "source": "semi_auto"}},
        {"id": "s", "audio_path": "s.wav", "hits": [0.2, 0.6, 1.0, 1.4]},
    ],
    "pair_tests": [{"id": "p", "factual_id": "a", "counterfactual_id": "b",
                    "expectations": [{"metric": "f0", "trend": "decrease"}]}],
    "single_tests": [{"id": "q", "clip_id": "s", "expectations": [{"metric": "f0", "trend": "ascending"}]}],
    "generations": [
        {"test_id": "p", "seeds": [{"seed": 0, "factual": "p/0/f.wav", "counterfactual": "p/0/c.wav",
                                    "semantic_factual": 0.5, "semantic_counterfactual": 0.7}]},
    ],
}


def doc(**changes):
    d = copy.deepcopy(MINIMAL)
    d.update(changes)
    return d


def issues(data):
    with pytest.raises(ManifestError) as info:
        parse_manifest(data)
    return info.value.issues


class TestLoad:
    def test_minimal(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps(MINIMAL), encoding="utf-8")
        corpus = load_manifest(path, generations_root=tmp_path / "gen")
        assert sorted(corpus.clips) == ["a", "b", "s"]
        assert corpus.clips["a"].audio_path == tmp_path / "a.wav"
        assert corpus.clips["b"].hits.source == "semi_auto"
        assert [t.id for t in corpus.tests] == ["p", "q"]
        seed = corpus.generations["p"].seeds[0]
        assert seed.seed == "0"
        assert seed.counterfactual == tmp_path / "gen" / "p/0/c.wav"
        assert seed.semantic_counterfactual == 0.7

    def test_empty_manifest(self):
        corpus = parse_manifest({})
        assert corpus.tests == ()

    def test_corpus_is_read_only(self):
        corpus = parse_manifest(MINIMAL)
        with pytest.raises(TypeError):
            corpus.clips["z"] = None

    def test_not_json(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{oops", encoding="utf-8")
        with pytest.raises(ManifestError, match="not valid JSON"):
            load_manifest(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError, match="cannot read"):
            load_manifest(tmp_path / "none.json")


class TestValidation:
    def test_pair_missing_clip(self):
        d = doc()
        d["pair_tests"][0]["counterfactual_id"] = "ghost"
        assert ("$.pair_tests[0].counterfactual_id", "unknown clip id 'ghost'") in issues(d)

    def test_fewer_counterfactual_hits(self):
        d = doc()
        d["pair_tests"][0]["factual_id"], d["pair_tests"][0]["counterfactual_id"] = "b", "a"
        (path, msg), = issues(d)
        assert path == "$.pair_tests[0].counterfactual_id"
        assert "at least as many" in msg

    def test_schema_error_has_path(self):
        d = doc()
        d["clips"][0]["hits"] = "soon"
        assert any(p == "$.clips[0].hits" for p, _ in issues(d))

    def test_unknown_key(self):
        assert issues(doc(extra=1))[0][0] == "$"

    def test_bad_metric(self):
        d = doc()
        d["single_tests"][0]["expectations"][0]["metric"] = "loudness"
        assert any(p.startswith("$.single_tests[0].expectations[0]") for p, _ in issues(d))

    def test_trend_wrong_for_test_kind(self):
        d = doc()
        d["pair_tests"][0]["expectations"][0]["trend"] = "ascending"
        assert issues(d)[0][0] == "$.pair_tests[0].expectations[0].trend"
        d = doc()
        d["single_tests"][0]["expectations"][0]["trend"] = "increase"
        assert issues(d)[0][0] == "$.single_tests[0].expectations[0].trend"

    def test_duplicate_ids(self):
        d = doc()
        d["clips"].append(dict(d["clips"][0]))
        assert ("$.clips[3].id", "duplicate clip id 'a'") in issues(d)
        d = doc()
        d["single_tests"][0]["id"] = "p"
        assert any("duplicate test id" in m for _, m in issues(d))

    def test_hits_beyond_duration(self):
        d = doc()
        d["clips"][0]["hits"] = [0.5, 2.5]
        assert issues(d)[0][0] == "$.clips[0].hits"

    def test_unsorted_hits(self):
        d = doc()
        d["clips"][2]["hits"] = [1.0, 0.5]
        assert issues(d)[0][0] == "$.clips[2].hits"

    def test_semantic_out_of_range(self):
        d = doc()
        d["generations"][0]["seeds"][0]["semantic_factual"] = 1.2
        assert issues(d)[0][0] == "$.generations[0].seeds[0].semantic_factual"

    def test_pair_seed_needs_counterfactual(self):
        d = doc()
        del d["generations"][0]["seeds"][0]["counterfactual"]
        assert issues(d)[0][0] == "$.generations[0].seeds[0]"

    def test_single_seed_rejects_counterfactual(self):
        d = doc()
        d["generations"].append({"test_id": "q", "seeds": [{"seed": 0, "factual": "f", "counterfactual": "c"}]})
        assert issues(d)[0][0] == "$.generations[1].seeds[0]"

    def test_generation_unknown_test(self):
        d = doc()
        d["generations"][0]["test_id"] = "nope"
        assert issues(d)[0] == ("$.generations[0].test_id", "unknown test id 'nope'")

    def test_all_problems_reported(self):
        d = doc()
        d["pair_tests"][0]["factual_id"] = "x"
        d["single_tests"][0]["clip_id"] = "y"
        assert len(issues(d)) == 2

    @settings(max_examples=150)
    @given(st.recursive(st.none() | st.booleans() | st.integers() | st.text(max_size=5),
                        lambda inner: st.lists(inner, max_size=3) | st.dictionaries(
                            st.sampled_from(["clips", "pair_tests", "id", "hits", "seeds", "x"]), inner, max_size=3),
                        max_leaves=12))
    def test_total(self, data):
        try:
            corpus = parse_manifest(data)
        except ManifestError as exc:
            assert exc.issues
        else:
            assert isinstance(corpus.tests, tuple)


class TestDiscover:
    def test_folder_layout(self, tmp_path):
        corpus = parse_manifest(doc(generations=[]))
        for seed in ("10", "2"):
            d = tmp_path / "q" / seed
            d.mkdir(parents=True)
            (d / "factual.wav").write_bytes(b"")
        (tmp_path / "q" / "2" / "semantic.json").write_text('{"factual": 0.25}', encoding="utf-8")
        gens = discover_generations(corpus, tmp_path)
        assert list(gens) == ["q"]
        assert [s.seed for s in gens["q"].seeds] == ["2", "10"]
        assert gens["q"].seeds[0].semantic_factual == 0.25
        assert gens["q"].seeds[0].counterfactual is None

    def test_pair_folder_expects_counterfactual(self, tmp_path):
        corpus = parse_manifest(doc(generations=[]))
        (tmp_path / "p" / "0").mkdir(parents=True)
        gens = discover_generations(corpus, tmp_path)
        assert gens["p"].seeds[0].counterfactual == tmp_path / "p" / "0" / "counterfactual.wav"

    def test_manifest_entries_win(self, tmp_path):
        corpus = parse_manifest(MINIMAL, generations_root=tmp_path)
        (tmp_path / "p" / "7").mkdir(parents=True)
        assert [s.seed for s in discover_generations(corpus, tmp_path)["p"].seeds] == ["0"]

    def test_bad_semantic_file(self, tmp_path):
        corpus = parse_manifest(doc(generations=[]))
        d = tmp_path / "q" / "0"
        d.mkdir(parents=True)
        (d / "semantic.json").write_text('{"factual": 3}', encoding="utf-8")
        with pytest.raises(ManifestError):
            discover_generations(corpus, tmp_path)
