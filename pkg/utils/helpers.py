"""
Helper functions and utilities for the summarization toolkit
"""

import os
import logging
from typing import Iterable, List, Sequence, Set, Tuple

logger = logging.getLogger(__name__)

Trigram = Tuple[str, str, str]


def is_word(token: str) -> bool:
    """A token counts as a word when it carries at least one letter or digit"""
    return any(ch.isalnum() for ch in token)


def word_count(tokens: Iterable[str]) -> int:
    """Count words the way the evaluation length limit does (punctuation is free)"""
    return sum(1 for token in tokens if is_word(token))


def truncate_to_words(tokens: Sequence[str], budget: int) -> List[str]:
    """Keep tokens up to and including the `budget`-th word"""
    if budget <= 0:
        return []
    kept: List[str] = []
    words = 0
    for token in tokens:
        if is_word(token):
            if words == budget:
                break
            words += 1
        kept.append(token)
    return kept


def trigrams(tokens: Sequence) -> List[Tuple]:
    return [tuple(tokens[i:i + 3]) for i in range(len(tokens) - 2)]


def has_repeated_trigram(tokens: Sequence) -> bool:
    seen: Set[Tuple] = set()
    for gram in trigrams(tokens):
        if gram in seen:
            return True
        seen.add(gram)
    return False


def creates_repeated_trigram(prefix: Sequence, candidate) -> bool:
    """True when appending `candidate` to `prefix` repeats a trigram already in `prefix`"""
    if len(prefix) < 2:
        return False
    new_gram = (prefix[-2], prefix[-1], candidate)
    return new_gram in set(trigrams(prefix))


def detokenize(tokens: Iterable[str]) -> str:
    return ' '.join(tokens)


def sanitize_filename(filename: str) -> str:
    """Replace characters that are invalid in file names"""
    invalid_chars = '<>:"/\\|?*'
    for char in invalid_chars:
        filename = filename.replace(char, '_')
    return filename[:100] or '_'


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_text(path: str, text: str) -> None:
    """Write a UTF-8 text file, creating parent directories"""
    parent = os.path.dirname(path)
    if parent:
        ensure_dir(parent)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    logger.debug(f"Wrote {path}")


class RunLogCollector(logging.Handler):
    """Collect formatted log lines emitted while a pipeline run is active"""

    def __init__(self, level: int = logging.INFO):
        super().__init__(level)
        self.lines: List[str] = []
        self._previous_level = logging.NOTSET
        self.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))

    def emit(self, record: logging.LogRecord) -> None:
        try:
            self.lines.append(self.format(record))
        except Exception:
            self.handleError(record)

    def __enter__(self) -> 'RunLogCollector':
        root = logging.getLogger()
        self._previous_level = root.level
        if root.getEffectiveLevel() > self.level:
            root.setLevel(self.level)
        root.addHandler(self)
        return self

    def __exit__(self, *exc) -> None:
        root = logging.getLogger()
        root.removeHandler(self)
        root.setLevel(self._previous_level)
