import json
import os

import numpy as np
import pytest

from services.corpus import (
    Corpus, CorpusError, kfold_split, load_duc_dir, load_jsonl, make_document_set, single_fold,
    split_sentences, strip_markers, tokenize, truncate_tokens, write_jsonl,
)


def _record(i, **changes):
    record = {'id': f'd{i}', 'query': 'q', 'documents': ['a b.'], 'summaries': ['a .']}
    record.update(changes)
    return record


def _write_lines(path, records):
    path.write_text('\n'.join(json.dumps(r) for r in records) + '\n', encoding='utf-8')
    return str(path)


def test_tokenize():
    assert tokenize('The cat sat.') == ['the', 'cat', 'sat', '.']
    assert tokenize('') == []
    assert tokenize("Don't stop") == ['don', "'", 't', 'stop']


def test_split_sentences():
    sentences = split_sentences('A b. C d!')
    assert [list(s.tokens) for s in sentences] == [['a', 'b', '.'], ['c', 'd', '!']]
    assert [s.index for s in sentences] == [0, 1]
    assert len(split_sentences('no terminator')) == 1
    hi = split_sentences('Hi. ')
    assert len(hi) == 1 and list(hi[0].tokens) == ['hi', '.']


def test_split_sentences_reproduces_tokenize():
    rng = np.random.default_rng(7)
    pieces = ['the', 'Cat', 'sat', '42', ',', '.', '!', '?', "don't", 'U.S.', '...', '(a)']
    for _ in range(100):
        words = rng.choice(pieces, size=int(rng.integers(0, 25)))
        gaps = rng.choice([' ', '  ', '\n', '\t'], size=len(words))
        text = ''.join(f'{w}{g}' for w, g in zip(words, gaps))
        sentences = split_sentences(text)
        assert [t for s in sentences for t in s.tokens] == tokenize(text)
        assert all(s.tokens for s in sentences)
        assert [s.index for s in sentences] == list(range(len(sentences)))


def test_truncate_tokens():
    assert truncate_tokens(['a', 'b', 'c'], 2) == ['a', 'b']
    assert truncate_tokens(['a', 'b'], 5) == ['a', 'b']
    assert truncate_tokens(['a'], 0) == []
    with pytest.raises(ValueError):
        truncate_tokens(['a'], -1)


def test_strip_markers():
    assert strip_markers('<s> a b . </s>') == 'a b .'
    assert strip_markers('plain') == 'plain'


def test_load_jsonl_single_line(tmp_path):
    corpus = load_jsonl(_write_lines(tmp_path / 'c.jsonl', [_record(1)]))
    example = corpus.examples[0]
    assert len(example.documents) == 1
    assert len(example.gold_summaries) == 1
    assert example.is_single_document


def test_load_jsonl_preserves_order(tmp_path):
    corpus = load_jsonl(_write_lines(tmp_path / 'c.jsonl', [_record(i) for i in (3, 1, 2)]), split='test')
    assert [ex.id for ex in corpus] == ['d3', 'd1', 'd2']
    assert corpus.split == 'test'


def test_load_jsonl_missing_field_names_field_and_line(tmp_path):
    bad = _record(2)
    del bad['query']
    with pytest.raises(CorpusError) as info:
        load_jsonl(_write_lines(tmp_path / 'c.jsonl', [_record(1), bad]))
    assert "'query'" in str(info.value)
    assert info.value.line == 2


def test_load_jsonl_malformed_json(tmp_path):
    path = tmp_path / 'c.jsonl'
    path.write_text('{"id": \n', encoding='utf-8')
    with pytest.raises(CorpusError):
        load_jsonl(str(path))


def test_duplicate_ids_rejected(tmp_path):
    with pytest.raises(CorpusError):
        load_jsonl(_write_lines(tmp_path / 'c.jsonl', [_record(1), _record(1)]))


def test_empty_gold_rejected():
    with pytest.raises(CorpusError):
        make_document_set('x', 'q', [('d', 'a b.')], ['  '])


def _duc_set(root, set_id, n_docs, n_golds, query='what happened'):
    base = root / set_id
    (base / 'docs').mkdir(parents=True)
    (base / 'gold').mkdir()
    (base / 'query.txt').write_text(query, encoding='utf-8')
    for i in range(n_docs):
        (base / 'docs' / f'doc{i}.txt').write_text(f'Sentence {i} here. Another one.', encoding='utf-8')
    for i in range(n_golds):
        (base / 'gold' / f'gold{i}.txt').write_text(f'Gold {i}.', encoding='utf-8')


def test_load_duc_dir(tmp_path):
    _duc_set(tmp_path, 'D001', 2, 4)
    corpus = load_duc_dir(str(tmp_path))
    example = corpus.examples[0]
    assert example.id == 'D001'
    assert len(example.documents) == 2
    assert len(example.gold_summaries) == 4
    assert [d.id for d in example.documents] == ['doc0', 'doc1']


def test_load_duc_dir_without_golds(tmp_path):
    _duc_set(tmp_path, 'D001', 2, 0)
    with pytest.raises(CorpusError):
        load_duc_dir(str(tmp_path))


def test_load_duc_dir_empty(tmp_path):
    assert len(load_duc_dir(str(tmp_path))) == 0


def test_jsonl_round_trip_keeps_examples(tmp_path):
    original = load_jsonl(_write_lines(tmp_path / 'c.jsonl', [_record(i) for i in range(3)]))
    out = str(tmp_path / 'out' / 'c.jsonl')
    write_jsonl(original, out)
    again = load_jsonl(out)
    assert [ex.id for ex in again] == [ex.id for ex in original]
    assert [ex.documents[0].tokens for ex in again] == [ex.documents[0].tokens for ex in original]


def _numbered_corpus(n):
    return Corpus(tuple(make_document_set(f'e{i}', 'q', [('d', 'a b.')], ['a.']) for i in range(n)))


def test_kfold_each_example_tested_once():
    folds = kfold_split(_numbered_corpus(10), 10, seed=1)
    assert len(folds) == 10
    assert all(len(test) == 1 for _, _, test in folds)
    tested = sorted(ex.id for _, _, test in folds for ex in test)
    assert tested == sorted(f'e{i}' for i in range(10))


def test_kfold_partition_proportions():
    for train, val, test in kfold_split(_numbered_corpus(20), 10, seed=0):
        assert (len(train), len(val), len(test)) == (16, 2, 2)
        ids = [ex.id for c in (train, val, test) for ex in c]
        assert len(set(ids)) == 20


def test_kfold_deterministic():
    a = kfold_split(_numbered_corpus(12), 4, seed=5)
    b = kfold_split(_numbered_corpus(12), 4, seed=5)
    assert [[ex.id for ex in f[2]] for f in a] == [[ex.id for ex in f[2]] for f in b]


def test_kfold_two_folds_has_training_data():
    for train, val, test in kfold_split(_numbered_corpus(4), 2):
        assert len(train) == 2 and len(val) == 0 and len(test) == 2


def test_kfold_too_many_folds():
    with pytest.raises(ValueError):
        kfold_split(_numbered_corpus(3), 4)


def test_single_fold():
    train, test = _numbered_corpus(2), Corpus((), 'test')
    [(tr, val, te)] = single_fold(train, test)
    assert tr is train and te is test and len(val) == 0
