"""
Beam search and greedy decoding with trigram blocking
"""

import logging
from dataclasses import dataclass, field
from typing import Any, List, Protocol, Sequence, Tuple

import numpy as np

from config import BeamConfig
from services.corpus import Summary
from services.modeling import BOS, EOS, RESERVED_TOKENS, EncoderInput, Vocab
from utils.helpers import creates_repeated_trigram, detokenize

logger = logging.getLogger(__name__)

# Only real tokens and [EOS] may be generated
FORBIDDEN_IDS = tuple(i for i in range(len(RESERVED_TOKENS)) if i != EOS)


class StepModel(Protocol):
    def encode_inputs(self, inputs: Sequence[EncoderInput]) -> Any:
        ...

    def next_token_log_probs(self, state: Any, prefixes: Sequence[Sequence[int]]) -> np.ndarray:
        ...


@dataclass
class Hypothesis:
    tokens: List[int] = field(default_factory=list)
    log_prob: float = 0.0


def length_penalty(length: int, alpha: float) -> float:
    return ((5.0 + length) / 6.0) ** alpha


def _next_scores(model: StepModel, state: Any, alive: Sequence[Hypothesis]) -> np.ndarray:
    log_probs = np.array(model.next_token_log_probs(state, [[BOS] + h.tokens for h in alive]), dtype=np.float64)
    log_probs[:, list(FORBIDDEN_IDS)] = -np.inf
    return log_probs


def decode_limit(model: StepModel, max_len: int) -> int:
    """max_len, capped by the model's `max_decode_len` when it declares one"""
    return min(max_len, getattr(model, 'max_decode_len', max_len))


def _allowed(hyp: Hypothesis, token: int, trigram_block: bool) -> bool:
    return not (trigram_block and token != EOS and creates_repeated_trigram(hyp.tokens, token))


def beam_search_ids(model: StepModel, encoder_input: EncoderInput, cfg: BeamConfig) -> List[int]:
    """
    Length-penalized beam search over token ids

    Each step keeps the best (beam_size - finished) extensions ranked by
    (-score, token id, beam index); extensions ending in [EOS] leave the beam.
    Hypotheses still alive at max_len (or the model's target limit) are
    finalized as they stand.

    Returns:
        Token ids of the best hypothesis, without [BOS]/[EOS]
    """
    cfg.validate()
    state = model.encode_inputs([encoder_input])
    alive = [Hypothesis()]
    finished: List[Hypothesis] = []

    for _ in range(decode_limit(model, cfg.max_len)):
        width = cfg.beam_size - len(finished)
        log_probs = _next_scores(model, state, alive)
        scores, tokens, beams = [], [], []
        for b, hyp in enumerate(alive):
            row = log_probs[b]
            taken = 0
            for token in np.argsort(-row, kind='stable'):
                if taken == width or not np.isfinite(row[token]):
                    break
                if not _allowed(hyp, int(token), cfg.trigram_block):
                    continue
                scores.append(hyp.log_prob + row[token])
                tokens.append(int(token))
                beams.append(b)
                taken += 1
        if not scores:
            break
        order = np.lexsort((np.array(beams), np.array(tokens), -np.array(scores, dtype=np.float64)))[:width]

        next_alive = []
        for i in order:
            parent = alive[beams[i]]
            if tokens[i] == EOS:
                finished.append(Hypothesis(list(parent.tokens), float(scores[i])))
            else:
                next_alive.append(Hypothesis(parent.tokens + [tokens[i]], float(scores[i])))
        alive = next_alive
        if len(finished) >= cfg.beam_size or not alive:
            break

    finished.extend(alive)
    if not finished:
        return []
    best = max(
        range(len(finished)),
        key=lambda i: (finished[i].log_prob / length_penalty(len(finished[i].tokens), cfg.length_penalty), -i),
    )
    return finished[best].tokens


def greedy_decode_ids(model: StepModel, encoder_input: EncoderInput, max_len: int,
                      trigram_block: bool = True) -> List[int]:
    """Argmax decoding; ties go to the lower token id"""
    state = model.encode_inputs([encoder_input])
    hyp = Hypothesis()
    for _ in range(decode_limit(model, max_len)):
        row = _next_scores(model, state, [hyp])[0]
        if trigram_block:
            for token in range(len(row)):
                if token != EOS and creates_repeated_trigram(hyp.tokens, token):
                    row[token] = -np.inf
        if not np.isfinite(row).any():
            break
        token = int(np.argmax(row))
        if token == EOS:
            break
        hyp.tokens.append(token)
    return hyp.tokens


def ids_to_summary(ids: Sequence[int], vocab: Vocab) -> Summary:
    return Summary.from_text(detokenize(vocab.decode(ids)))


def beam_search(model: StepModel, encoder_input: EncoderInput, cfg: BeamConfig, vocab: Vocab) -> Summary:
    return ids_to_summary(beam_search_ids(model, encoder_input, cfg), vocab)
