import json

import pytest

from services.corpus import Summary, make_document, make_document_set, make_query, split_sentences
from services.relevance import (
    CorpusStats, OverlapScorer, ScoredSentence, TfidfScorer, UnigramF1Similarity, sentence_similarity,
)
from services.synthetic import make_multi_document_corpus, make_planted_corpus
from services.weaksup import (
    SEED_SIZE, UNREPLACED, WeakReference, WeakSupervisionError, build_weak_corpus, distant_replace,
    initial_weak_extractive,
)

NO_STATS = CorpusStats.from_units([])


class CountingSimilarity:
    name = 'counting'

    def __init__(self):
        self.calls = 0

    def score(self, s1, s2):
        self.calls += 1
        return sentence_similarity(s1, s2)


class TableSimilarity:
    name = 'table'

    def __init__(self, table):
        self.table = table

    def score(self, s1, s2):
        return self.table[(s1.raw, s2.raw)]


def _seed(*texts, doc_id='d'):
    return [ScoredSentence(s, doc_id, 0.0, rank) for rank, s in enumerate(split_sentences(' '.join(texts)))]


def test_seed_keeps_all_of_a_short_document():
    doc = make_document('d', 'Cat naps. Food bowls. Cat food.')
    seed = initial_weak_extractive(doc, make_query('cat food'), OverlapScorer(), NO_STATS)
    assert [s.sentence.index for s in seed] == [2, 0, 1]


def test_seed_picks_top_three_with_index_tie_break():
    doc = make_document('d', 'Cat food here. Dogs bark. The cat sleeps. Rain falls. Food is good.')
    seed = initial_weak_extractive(doc, make_query('cat food'), OverlapScorer(), NO_STATS)
    assert [s.score for s in seed] == [2.0, 1.0, 1.0]
    assert [s.sentence.index for s in seed] == [0, 2, 4]


def test_seed_single_sentence():
    doc = make_document('d', 'Only one.')
    assert len(initial_weak_extractive(doc, make_query('one'), TfidfScorer(), NO_STATS)) == 1


def test_replace_single_pair():
    reference = distant_replace(_seed('seed text.'), [Summary.from_text('gold text.')], UnigramF1Similarity())
    assert [s.raw for s in reference.replaced_sentences] == ['gold text.']
    assert reference.provenance == ((0, 0),)


def test_replace_never_reuses_a_gold_sentence():
    seed = _seed('e one.', 'e two.')
    gold = Summary.from_text('g zero. g one. g two.')
    table = {
        ('e one.', 'g zero.'): 0.1, ('e one.', 'g one.'): 0.9, ('e one.', 'g two.'): 0.5,
        ('e two.', 'g zero.'): 0.2, ('e two.', 'g one.'): 0.8, ('e two.', 'g two.'): 0.6,
    }
    reference = distant_replace(seed, [gold], TableSimilarity(table))
    assert [s.raw for s in reference.replaced_sentences] == ['g one.', 'g two.']
    assert reference.provenance == ((0, 1), (0, 2))


def test_replace_prefers_identical_sentence():
    golds = [Summary.from_text('Markets fell sharply. Rain came.'), Summary.from_text('The cat eats food.')]
    reference = distant_replace(_seed('The cat eats food.'), golds, UnigramF1Similarity())
    assert reference.provenance == ((1, 0),)


def test_replace_ties_go_to_first_gold():
    golds = [Summary.from_text('x y.'), Summary.from_text('x y.')]
    reference = distant_replace(_seed('x y.'), golds, UnigramF1Similarity())
    assert reference.provenance == ((0, 0),)


def test_replace_needs_enough_gold_sentences():
    with pytest.raises(WeakSupervisionError):
        distant_replace(_seed('a.', 'b.'), [Summary.from_text('only one.')], UnigramF1Similarity())


def test_reference_rejects_reuse():
    seed = _seed('a.', 'b.')
    gold = split_sentences('g.')[0]
    with pytest.raises(WeakSupervisionError):
        WeakReference('d', tuple(seed), (gold, gold), ((0, 0), (0, 0)))


def test_weak_corpus_cardinality_and_determinism():
    sets = make_multi_document_corpus(n_sets=2, n_docs=3, seed=4)
    stats = CorpusStats.from_document_sets(sets)
    a = build_weak_corpus(list(sets), TfidfScorer(), UnigramF1Similarity(), stats)
    b = build_weak_corpus(list(sets), TfidfScorer(), UnigramF1Similarity(), stats)
    assert len(a) == 6
    assert a == b


def test_weak_references_come_from_the_same_set():
    sets = make_multi_document_corpus(n_sets=3, n_docs=2, seed=1)
    weak = build_weak_corpus(list(sets), TfidfScorer(), UnigramF1Similarity(), CorpusStats.from_document_sets(sets))
    by_id = {ex.id: ex for ex in sets}
    for example in weak.examples:
        golds = by_id[example.set_id].gold_summaries
        provenance = example.reference.provenance
        assert len(set(provenance)) == len(provenance)
        for (g, s), sentence in zip(provenance, example.reference.replaced_sentences):
            assert golds[g].sentences[s].tokens == sentence.tokens


def test_planted_gold_sentence_is_recovered():
    corpus, planted = make_planted_corpus(n_sets=10, n_docs=3, seed=2)
    weak = build_weak_corpus(list(corpus), TfidfScorer(), UnigramF1Similarity(),
                             CorpusStats.from_document_sets(corpus))
    assert len(weak) == 30
    for example in weak.examples:
        assert example.reference.replaced_sentences[0].tokens == planted[example.document.id]


def test_similarity_calls_are_bounded_by_seed_size():
    corpus = make_multi_document_corpus(n_sets=2, n_docs=2, seed=3)
    for document_set in corpus:
        n_gold = sum(len(g.sentences) for g in document_set.gold_summaries)
        for doc in document_set.documents:
            sim = CountingSimilarity()
            seed = initial_weak_extractive(doc, document_set.query, TfidfScorer(), NO_STATS)
            distant_replace(seed, document_set.gold_summaries, sim, doc.id)
            assert sim.calls <= SEED_SIZE * n_gold


def test_short_golds_are_skipped_with_warning():
    sets = [make_document_set('s', 'cat', [('d0', 'Cat one. Cat two. Cat three.')], ['Just one.'])]
    weak = build_weak_corpus(sets, OverlapScorer(), UnigramF1Similarity(), NO_STATS)
    assert len(weak) == 0
    assert len(weak.warnings) == 1 and 'd0' in weak.warnings[0]


def test_without_distant_supervision_seed_is_kept():
    sets = [make_document_set('s', 'cat', [('d0', 'Cat one. Dog two. Cat three.')], ['Just one.'])]
    weak = build_weak_corpus(sets, OverlapScorer(), UnigramF1Similarity(), NO_STATS, use_distant_supervision=False)
    reference = weak.examples[0].reference
    assert [s.raw for s in reference.replaced_sentences] == ['Cat one.', 'Cat three.', 'Dog two.']
    assert all(g == UNREPLACED for g, _ in reference.provenance)


def test_weak_corpus_jsonl(tmp_path):
    sets = make_multi_document_corpus(n_sets=1, n_docs=2, seed=0)
    weak = build_weak_corpus(list(sets), TfidfScorer(), UnigramF1Similarity(), CorpusStats.from_document_sets(sets))
    path = tmp_path / 'weak.jsonl'
    weak.to_jsonl(str(path))
    records = [json.loads(line) for line in path.read_text(encoding='utf-8').splitlines()]
    assert len(records) == 2
    assert set(records[0]) == {'set_id', 'doc_id', 'query', 'document', 'weak_summary', 'provenance'}
    assert all(len(pair) == 2 for pair in records[0]['provenance'])
