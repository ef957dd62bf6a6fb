"""
Miniature transformer encoder-decoder with query-document attention masking
"""

import math
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from config import ModelConfig
from services.corpus import Document, Query, Token

logger = logging.getLogger(__name__)

PAD, UNK, CLS, SEP, BOS, EOS = range(6)
RESERVED_TOKENS = ('[PAD]', '[UNK]', '[CLS]', '[SEP]', '[BOS]', '[EOS]')

QUERY_SEGMENT = 0
DOCUMENT_SEGMENT = 1


class Vocab:
    """Token <-> id bijection with the reserved ids 0..5"""

    def __init__(self, tokens: Iterable[Token] = ()):
        self.itos: List[str] = list(RESERVED_TOKENS)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for token in tokens:
            self.add(token)

    def add(self, token: Token) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    @classmethod
    def build(cls, token_streams: Iterable[Iterable[Token]], min_count: int = 1,
              max_size: Optional[int] = None) -> 'Vocab':
        """Most frequent tokens first; equal counts in lexicographic order"""
        counts: Counter = Counter()
        for stream in token_streams:
            counts.update(stream)
        ranked = sorted((t for t, c in counts.items() if c >= min_count and t not in RESERVED_TOKENS),
                        key=lambda t: (-counts[t], t))
        if max_size is not None:
            ranked = ranked[:max(0, max_size - len(RESERVED_TOKENS))]
        return cls(ranked)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: Token) -> bool:
        return token in self.stoi

    def encode(self, tokens: Iterable[Token]) -> List[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> List[Token]:
        """Ids to tokens; reserved ids are dropped"""
        return [self.itos[i] for i in ids if i >= len(RESERVED_TOKENS)]

    def tokens(self) -> List[Token]:
        """Non-reserved tokens in id order (what a checkpoint stores)"""
        return self.itos[len(RESERVED_TOKENS):]


@dataclass(frozen=True)
class EncoderInput:
    token_ids: Tuple[int, ...]
    segment_ids: Tuple[int, ...]
    query_len: int
    cls_positions: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.token_ids)


def build_encoder_input(query: Optional[Query], doc: Document, vocab: Vocab, max_len: int,
                        use_query: bool = True) -> EncoderInput:
    """
    Lay out [CLS] query [SEP] followed by [CLS] sentence [SEP] for every document sentence

    Args:
        query: The query (ignored when use_query is False)
        doc: Source document
        vocab: Vocabulary
        max_len: Maximum number of positions
        use_query: False drops the query segment, keeping only the leading [CLS]

    Returns:
        EncoderInput truncated to max_len; the query segment is never split

    Raises:
        ValueError: If the query segment alone exceeds max_len
    """
    if use_query:
        if query is None or not query.tokens:
            raise ValueError("A non-empty query is required when use_query is set")
        head = [CLS] + vocab.encode(query.tokens) + [SEP]
    else:
        head = [CLS]
    if len(head) > max_len:
        raise ValueError(f"Query segment has {len(head)} positions, more than max_len={max_len}")

    ids = list(head)
    cls_positions = []
    for sentence in doc.sentences:
        if len(ids) >= max_len:
            break
        cls_positions.append(len(ids))
        ids.append(CLS)
        ids.extend(vocab.encode(sentence.tokens))
        ids.append(SEP)
    ids = ids[:max_len]
    segments = [QUERY_SEGMENT] * len(head) + [DOCUMENT_SEGMENT] * (len(ids) - len(head))
    return EncoderInput(tuple(ids), tuple(segments), len(head), tuple(cls_positions))


def mask_sentinel(dtype: torch.dtype) -> float:
    """Finite stand-in for -infinity in additive masks"""
    return -1e18 if dtype == torch.float64 else -1e9


@dataclass(frozen=True)
class MaskMatrix:
    values: torch.Tensor

    @property
    def allowed(self) -> torch.Tensor:
        return self.values == 0

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)


class AttentionTensors(NamedTuple):
    q: torch.Tensor
    k: torch.Tensor
    v: torch.Tensor

    @property
    def d_k(self) -> int:
        return self.q.size(-1)


def qd_mask(query_len: int, total_len: int, dtype: torch.dtype = torch.float32) -> MaskMatrix:
    """Query rows may only look at query columns; document rows look everywhere"""
    if not 0 < query_len <= total_len:
        raise ValueError(f"Need 0 < query_len <= total_len, got {query_len}, {total_len}")
    values = torch.zeros(total_len, total_len, dtype=dtype)
    values[:query_len, query_len:] = mask_sentinel(dtype)
    return MaskMatrix(values)


def bidirectional_mask(total_len: int, dtype: torch.dtype = torch.float32) -> MaskMatrix:
    return MaskMatrix(torch.zeros(total_len, total_len, dtype=dtype))


def scaled_dot_product(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
                       mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """softmax(q·kᵀ/√d_k + M)·v with masked weights forced to exactly zero"""
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.size(-1))
    if mask is not None:
        scores = scores + mask
    weights = F.softmax(scores, dim=-1)
    if mask is not None:
        weights = weights.masked_fill(mask < 0, 0.0)
    return weights @ v


def attention(t: AttentionTensors, mask: MaskMatrix) -> torch.Tensor:
    """
    Masked scaled dot-product attention for one head

    Raises:
        ValueError: If the tensor or mask shapes do not line up
    """
    if t.q.size(-1) != t.k.size(-1):
        raise ValueError(f"Q and K column counts differ: {t.q.size(-1)} vs {t.k.size(-1)}")
    if t.k.size(-2) != t.v.size(-2):
        raise ValueError(f"K and V row counts differ: {t.k.size(-2)} vs {t.v.size(-2)}")
    expected = (t.q.size(-2), t.k.size(-2))
    if mask.shape[-2:] != expected:
        raise ValueError(f"Mask shape {mask.shape} does not match score shape {expected}")
    return scaled_dot_product(t.q, t.k, t.v, mask.values.to(t.q.dtype))


def sinusoidal_positions(length: int, d_model: int) -> torch.Tensor:
    position = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    div_term = torch.exp(torch.arange(0, d_model, 2, dtype=torch.float64) * (-math.log(10000.0) / d_model))
    table = torch.zeros(length, d_model, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * div_term)
    table[:, 1::2] = torch.cos(position * div_term)[:, :d_model // 2]
    return table.float()


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, length, _ = x.shape
        return x.view(b, length, self.n_heads, self.d_head).transpose(1, 2)

    def forward(self, x_q: torch.Tensor, x_kv: torch.Tensor, mask: Optional[torch.Tensor]) -> torch.Tensor:
        q = self._split(self.q_proj(x_q))
        k = self._split(self.k_proj(x_kv))
        v = self._split(self.v_proj(x_kv))
        z = scaled_dot_product(q, k, v, mask)
        b, _, length, _ = z.shape
        return self.out_proj(z.transpose(1, 2).reshape(b, length, -1))


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int):
        super().__init__()
        self.inner = nn.Linear(d_model, d_ff)
        self.outer = nn.Linear(d_ff, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.outer(F.gelu(self.inner(x)))


class EncoderLayer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(config.d_model, config.n_heads)
        self.ffn = FeedForward(config.d_model, config.d_ff)
        self.norm1 = nn.LayerNorm(config.d_model)
        self.norm2 = nn.LayerNorm(config.d_model)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.dropout(self.self_attn(x, x, mask)))
        return self.norm2(x + self.dropout(self.ffn(x)))


class DecoderLayer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(config.d_model, config.n_heads)
        self.cross_attn = MultiHeadAttention(config.d_model, config.n_heads)
        self.ffn = FeedForward(config.d_model, config.d_ff)
        self.norm1 = nn.LayerNorm(config.d_model)
        self.norm2 = nn.LayerNorm(config.d_model)
        self.norm3 = nn.LayerNorm(config.d_model)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, y: torch.Tensor, memory: torch.Tensor, self_mask: torch.Tensor,
                cross_mask: torch.Tensor) -> torch.Tensor:
        y = self.norm1(y + self.dropout(self.self_attn(y, y, self_mask)))
        y = self.norm2(y + self.dropout(self.cross_attn(y, memory, cross_mask)))
        return self.norm3(y + self.dropout(self.ffn(y)))


@dataclass
class EncoderBatch:
    token_ids: torch.Tensor      # (B, S) long
    segment_ids: torch.Tensor    # (B, S) long
    query_lens: torch.Tensor     # (B,) long
    pad_mask: torch.Tensor       # (B, S) bool, True at padding


def collate_inputs(inputs: Sequence[EncoderInput]) -> EncoderBatch:
    length = max(len(x) for x in inputs)
    ids = torch.full((len(inputs), length), PAD, dtype=torch.long)
    segments = torch.zeros((len(inputs), length), dtype=torch.long)
    pad = torch.ones((len(inputs), length), dtype=torch.bool)
    for i, x in enumerate(inputs):
        ids[i, :len(x)] = torch.tensor(x.token_ids, dtype=torch.long)
        segments[i, :len(x)] = torch.tensor(x.segment_ids, dtype=torch.long)
        pad[i, :len(x)] = False
    query_lens = torch.tensor([x.query_len for x in inputs], dtype=torch.long)
    return EncoderBatch(ids, segments, query_lens, pad)


class QFASTransformer(nn.Module):
    """Encoder-decoder summarizer with a sentence-scoring head on the [CLS] positions"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        if config.vocab_size <= len(RESERVED_TOKENS):
            raise ValueError(f"vocab_size must exceed {len(RESERVED_TOKENS)}, got {config.vocab_size}")
        self.config = config
        d = config.d_model
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            self.token_embedding = nn.Embedding(config.vocab_size, d)
            self.segment_embedding = nn.Embedding(2, d)
            nn.init.normal_(self.token_embedding.weight, std=d ** -0.5)
            nn.init.normal_(self.segment_embedding.weight, std=d ** -0.5)
            self.encoder_layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.n_enc_layers))
            self.decoder_layers = nn.ModuleList(DecoderLayer(config) for _ in range(config.n_dec_layers))
            self.generator = nn.Linear(d, config.vocab_size)
            self.ext_head = nn.Linear(d, 1)
        self.dropout = nn.Dropout(config.dropout)
        self.embed_scale = math.sqrt(d)
        table = sinusoidal_positions(max(config.max_src_len, config.max_tgt_len + 1), d)
        self.register_buffer('positions', table, persistent=False)

    @property
    def dtype(self) -> torch.dtype:
        return self.token_embedding.weight.dtype

    def _embed(self, ids: torch.Tensor, segments: Optional[torch.Tensor]) -> torch.Tensor:
        x = self.token_embedding(ids) * self.embed_scale
        if segments is not None:
            x = x + self.segment_embedding(segments)
        if self.config.use_positions:
            x = x + self.positions[:ids.size(1)].to(x.dtype)
        return self.dropout(x)

    def encoder_mask(self, batch: EncoderBatch) -> torch.Tensor:
        """Additive (B, 1, S, S) mask: query-document structure plus padding columns"""
        b, s = batch.token_ids.shape
        sentinel = mask_sentinel(self.dtype)
        mask = torch.zeros(b, s, s, dtype=self.dtype)
        if self.config.attention_mode == 'query_document':
            pos = torch.arange(s)
            query_rows = pos.unsqueeze(0) < batch.query_lens.unsqueeze(1)
            blocked = query_rows.unsqueeze(2) & ~query_rows.unsqueeze(1)
            mask = mask.masked_fill(blocked, sentinel)
        mask = mask.masked_fill(batch.pad_mask.unsqueeze(1), sentinel)
        return mask.unsqueeze(1)

    def encode(self, batch: EncoderBatch) -> torch.Tensor:
        if batch.token_ids.size(1) > self.config.max_src_len:
            raise ValueError(f"Input length {batch.token_ids.size(1)} exceeds max_src_len={self.config.max_src_len}")
        mask = self.encoder_mask(batch)
        x = self._embed(batch.token_ids, batch.segment_ids)
        for layer in self.encoder_layers:
            x = layer(x, mask)
        return x

    def decode(self, tgt_in: torch.Tensor, memory: torch.Tensor, src_pad: torch.Tensor,
               tgt_pad: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Next-token logits (B, T, V) for every target prefix"""
        t = tgt_in.size(1)
        if t > self.config.max_tgt_len + 1:
            raise ValueError(f"Target length {t} exceeds max_tgt_len={self.config.max_tgt_len}")
        sentinel = mask_sentinel(self.dtype)
        causal = torch.triu(torch.ones(t, t, dtype=torch.bool), diagonal=1)
        self_mask = torch.zeros(tgt_in.size(0), t, t, dtype=self.dtype).masked_fill(causal, sentinel)
        if tgt_pad is not None:
            # a padded row keeps its own diagonal so no row is fully masked
            self_mask = self_mask.masked_fill(tgt_pad.unsqueeze(1) & ~torch.eye(t, dtype=torch.bool), sentinel)
        cross_mask = torch.zeros(src_pad.shape, dtype=self.dtype).masked_fill(src_pad, sentinel)
        y = self._embed(tgt_in, None)
        for layer in self.decoder_layers:
            y = layer(y, memory, self_mask.unsqueeze(1), cross_mask[:, None, None, :])
        return self.generator(y)

    def forward(self, batch: EncoderBatch, tgt_in: torch.Tensor,
                tgt_pad: Optional[torch.Tensor] = None) -> torch.Tensor:
        memory = self.encode(batch)
        return self.decode(tgt_in, memory, batch.pad_mask, tgt_pad)

    def sentence_logits(self, hidden: torch.Tensor, cls_positions: Sequence[int]) -> torch.Tensor:
        """Logits of the sentence-scoring head for one example's hidden states (S, d)"""
        index = torch.tensor(list(cls_positions), dtype=torch.long)
        return self.ext_head(hidden.index_select(0, index)).squeeze(-1)

    # Step interface used by the beam search decoder

    @property
    def max_decode_len(self) -> int:
        """Decoding steps the target positions allow: [BOS] plus max_tgt_len tokens"""
        return self.config.max_tgt_len + 1

    @torch.no_grad()
    def encode_inputs(self, inputs: Sequence[EncoderInput]) -> Tuple[torch.Tensor, torch.Tensor]:
        self.eval()
        batch = collate_inputs(inputs)
        return self.encode(batch), batch.pad_mask

    @torch.no_grad()
    def next_token_log_probs(self, state: Tuple[torch.Tensor, torch.Tensor],
                             prefixes: Sequence[Sequence[int]]) -> np.ndarray:
        """Log-probabilities of the next token after each prefix (all prefixes share one input)"""
        self.eval()
        memory, pad = state
        n = len(prefixes)
        tgt = torch.tensor([list(p) for p in prefixes], dtype=torch.long)
        logits = self.decode(tgt, memory.expand(n, -1, -1), pad.expand(n, -1))
        return F.log_softmax(logits[:, -1, :].double(), dim=-1).numpy()


def encode(encoder_input: EncoderInput, model: QFASTransformer) -> torch.Tensor:
    """Hidden states (S, d_model) for one input, in eval mode"""
    memory, _ = model.encode_inputs([encoder_input])
    return memory[0]


@torch.no_grad()
def extractive_scores(hidden: torch.Tensor, cls_positions: Sequence[int], model: QFASTransformer) -> List[float]:
    """Probability that each document sentence belongs in the extractive summary"""
    if not cls_positions:
        return []
    if max(cls_positions) >= hidden.size(0) or min(cls_positions) < 0:
        raise ValueError(f"cls_positions out of range for {hidden.size(0)} positions")
    return torch.sigmoid(model.sentence_logits(hidden, cls_positions)).tolist()
