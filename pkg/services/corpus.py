"""
Corpus data model, tokenization, sentence splitting and ingestion
"""

import os
import re
import json
import glob
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

Token = str

SPLITS = ('train', 'validation', 'test')

_TOKEN_PATTERN = re.compile(r'\w+|[^\w\s]')
_SENTENCE_BOUNDARY = re.compile(r'(?<=[.!?])\s+')
# Start/end markers found in Debatepedia-style dumps
_MARKER_PATTERN = re.compile(r'</?s>|<eos>')

REQUIRED_FIELDS = ('id', 'query', 'documents', 'summaries')


class CorpusError(ValueError):
    """Malformed or invalid corpus input"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ''
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class Sentence:
    tokens: Tuple[Token, ...]
    index: int
    raw: str

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Document:
    id: str
    sentences: Tuple[Sentence, ...]

    @property
    def tokens(self) -> List[Token]:
        return [t for s in self.sentences for t in s.tokens]


@dataclass(frozen=True)
class Query:
    tokens: Tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Summary:
    tokens: Tuple[Token, ...]
    sentences: Tuple[Sentence, ...]

    @classmethod
    def from_text(cls, text: str) -> 'Summary':
        sentences = tuple(split_sentences(text))
        return cls(tokens=tuple(t for s in sentences for t in s.tokens), sentences=sentences)

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sentence]) -> 'Summary':
        renumbered = tuple(Sentence(tokens=s.tokens, index=i, raw=s.raw) for i, s in enumerate(sentences))
        return cls(tokens=tuple(t for s in renumbered for t in s.tokens), sentences=renumbered)

    @property
    def text(self) -> str:
        return ' '.join(self.tokens)


@dataclass(frozen=True)
class DocumentSet:
    id: str
    query: Query
    documents: Tuple[Document, ...]
    gold_summaries: Tuple[Summary, ...]

    @property
    def is_single_document(self) -> bool:
        return len(self.documents) == 1

    def all_sentences(self) -> List[Tuple[str, Sentence]]:
        return [(doc.id, s) for doc in self.documents for s in doc.sentences]


@dataclass(frozen=True)
class Corpus:
    examples: Tuple[DocumentSet, ...]
    split: str = 'train'

    def __post_init__(self):
        if self.split not in SPLITS:
            raise CorpusError(f"Unknown split {self.split!r}; expected one of {SPLITS}")
        seen = set()
        for example in self.examples:
            if example.id in seen:
                raise CorpusError(f"Duplicate example id {example.id!r} in {self.split} split")
            seen.add(example.id)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


def tokenize(text: str) -> List[Token]:
    """
    Lowercase, isolate punctuation characters, drop whitespace

    Args:
        text: Raw text

    Returns:
        Token list (empty for empty input)
    """
    return _TOKEN_PATTERN.findall(text.lower())


def split_sentences(text: str) -> List[Sentence]:
    """Split on terminal punctuation followed by whitespace; never yields empty sentences"""
    sentences: List[Sentence] = []
    for piece in _SENTENCE_BOUNDARY.split(text.strip()):
        tokens = tokenize(piece)
        if tokens:
            sentences.append(Sentence(tokens=tuple(tokens), index=len(sentences), raw=piece))
    return sentences


def truncate_tokens(tokens: Sequence[Token], n: int) -> List[Token]:
    if n < 0:
        raise ValueError(f"Token budget must be >= 0, got {n}")
    return list(tokens[:n])


def strip_markers(text: str) -> str:
    """Remove literal <s>, </s> and <eos> markers"""
    if '<' not in text:
        return text
    return re.sub(r'\s+', ' ', _MARKER_PATTERN.sub(' ', text)).strip()


def make_query(text: str) -> Query:
    tokens = tokenize(strip_markers(text))
    if not tokens:
        raise CorpusError("Query is empty")
    return Query(tokens=tuple(tokens))


def make_document(doc_id: str, text: str) -> Document:
    sentences = split_sentences(strip_markers(text))
    if not sentences:
        raise CorpusError(f"Document {doc_id!r} has no sentences")
    return Document(id=doc_id, sentences=tuple(sentences))


def make_document_set(set_id: str, query: str, documents: Sequence[Tuple[str, str]],
                      summaries: Sequence[str]) -> DocumentSet:
    """
    Build a validated DocumentSet from raw strings

    Args:
        set_id: Example id
        query: Query text
        documents: (doc_id, text) pairs
        summaries: Gold summary texts

    Raises:
        CorpusError: If any invariant of the data model is violated
    """
    if not documents:
        raise CorpusError(f"Example {set_id!r} has no documents")
    if not summaries:
        raise CorpusError(f"Example {set_id!r} has no gold summaries")
    doc_ids = [doc_id for doc_id, _ in documents]
    if len(set(doc_ids)) != len(doc_ids):
        raise CorpusError(f"Example {set_id!r} has duplicate document ids")
    golds = []
    for i, text in enumerate(summaries):
        gold = Summary.from_text(strip_markers(text))
        if not gold.tokens:
            raise CorpusError(f"Example {set_id!r} has an empty gold summary at index {i}")
        golds.append(gold)
    return DocumentSet(
        id=set_id,
        query=make_query(query),
        documents=tuple(make_document(doc_id, text) for doc_id, text in documents),
        gold_summaries=tuple(golds),
    )


def _record_to_document_set(record: Dict) -> DocumentSet:
    if not isinstance(record, dict):
        raise CorpusError("Record is not a JSON object")
    for name in REQUIRED_FIELDS:
        if name not in record:
            raise CorpusError(f"Missing required field {name!r}")
    if not isinstance(record['id'], str) or not record['id']:
        raise CorpusError("Field 'id' must be a non-empty string")
    if not isinstance(record['query'], str):
        raise CorpusError("Field 'query' must be a string")
    for name in ('documents', 'summaries'):
        value = record[name]
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise CorpusError(f"Field {name!r} must be a list of strings")
    documents = [(f"{record['id']}-d{i}", text) for i, text in enumerate(record['documents'])]
    return make_document_set(record['id'], record['query'], documents, record['summaries'])


def load_jsonl(path: str, split: str = 'train') -> Corpus:
    """
    Load a JSONL corpus, one document set per line

    Args:
        path: JSONL file path
        split: Split label for the resulting corpus

    Returns:
        Corpus with examples in file order

    Raises:
        CorpusError: On malformed JSON or invalid records (with line number)
    """
    examples: List[DocumentSet] = []
    try:
        with open(path, 'r', encoding='utf-8') as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise CorpusError(f"Malformed JSON: {e.msg}", path=path, line=line_no)
                try:
                    examples.append(_record_to_document_set(record))
                except CorpusError as e:
                    raise CorpusError(str(e), path=path, line=line_no)
    except OSError as e:
        raise CorpusError(f"Cannot read corpus: {e}", path=path)

    corpus = _build_corpus(examples, split, path)
    logger.info(f"Loaded {len(corpus)} examples from {path} ({split})")
    return corpus


def _read_text(path: str) -> str:
    with open(path, 'r', encoding='utf-8') as f:
        return f.read()


def load_duc_dir(path: str, split: str = 'test') -> Corpus:
    """
    Load a DUC-style directory: <root>/<set-id>/{query.txt, docs/*.txt, gold/*.txt}

    Args:
        path: Root directory
        split: Split label for the resulting corpus

    Returns:
        Corpus with one DocumentSet per subdirectory, sorted by set id

    Raises:
        CorpusError: If a set lacks its query file, documents or gold summaries
    """
    if not os.path.isdir(path):
        raise CorpusError("Not a directory", path=path)

    examples: List[DocumentSet] = []
    for set_id in sorted(os.listdir(path)):
        set_dir = os.path.join(path, set_id)
        if not os.path.isdir(set_dir):
            continue
        query_file = os.path.join(set_dir, 'query.txt')
        if not os.path.isfile(query_file):
            raise CorpusError(f"Document set {set_id!r} has no query.txt", path=set_dir)
        doc_files = sorted(glob.glob(os.path.join(set_dir, 'docs', '*.txt')))
        gold_files = sorted(glob.glob(os.path.join(set_dir, 'gold', '*.txt')))
        if not doc_files:
            raise CorpusError(f"Document set {set_id!r} has no documents", path=set_dir)
        if not gold_files:
            raise CorpusError(f"Document set {set_id!r} has no gold summaries", path=set_dir)
        try:
            examples.append(make_document_set(
                set_id,
                _read_text(query_file),
                [(os.path.splitext(os.path.basename(p))[0], _read_text(p)) for p in doc_files],
                [_read_text(p) for p in gold_files],
            ))
        except CorpusError as e:
            raise CorpusError(str(e), path=set_dir)

    corpus = _build_corpus(examples, split, path)
    logger.info(f"Loaded {len(corpus)} document sets from {path} ({split})")
    return corpus


def _build_corpus(examples: List[DocumentSet], split: str, path: str) -> Corpus:
    try:
        return Corpus(examples=tuple(examples), split=split)
    except CorpusError as e:
        raise CorpusError(str(e), path=path)


def document_set_to_record(example: DocumentSet) -> Dict:
    """Inverse of the JSONL schema (texts are rebuilt from tokens)"""
    return {
        'id': example.id,
        'query': ' '.join(example.query.tokens),
        'documents': [' '.join(s.raw for s in doc.sentences) for doc in example.documents],
        'summaries': [gold.text for gold in example.gold_summaries],
    }


def write_jsonl(corpus: Corpus, path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for example in corpus:
            f.write(json.dumps(document_set_to_record(example), ensure_ascii=False) + '\n')
    logger.info(f"Wrote {len(corpus)} examples to {path}")


def kfold_split(corpus: Corpus, k: int, seed: int = 0) -> List[Tuple[Corpus, Corpus, Corpus]]:
    """
    Seeded k-fold partition into (train, validation, test) triples

    Fold i tests on part i, validates on part i+1 (mod k) and trains on the rest,
    which gives the 80/10/10 proportions for k=10. With k=2 there is no validation part.

    Raises:
        ValueError: If k < 2 or k exceeds the number of examples
    """
    n = len(corpus)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of examples ({n})")

    order = np.random.default_rng(seed).permutation(n)
    parts = [list(p) for p in np.array_split(order, k)]
    examples = corpus.examples

    folds = []
    for i in range(k):
        test_idx = parts[i]
        # with two folds there is no part left over for validation
        val_part = (i + 1) % k if k > 2 else None
        val_idx = parts[val_part] if val_part is not None else []
        train_idx = sorted(j for p, part in enumerate(parts) if p not in (i, val_part) for j in part)
        folds.append((
            Corpus(tuple(examples[j] for j in train_idx), 'train'),
            Corpus(tuple(examples[j] for j in sorted(val_idx)), 'validation'),
            Corpus(tuple(examples[j] for j in sorted(test_idx)), 'test'),
        ))
    logger.debug(f"Built {k} folds over {n} examples (seed={seed})")
    return folds


def single_fold(train: Corpus, test: Corpus) -> List[Tuple[Corpus, Corpus, Corpus]]:
    """Degenerate one-fold plan: plain train/test run without validation data"""
    return [(train, Corpus((), 'validation'), test)]
