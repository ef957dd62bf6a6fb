"""
Shared fixtures: tiny configs, toy corpora and small models
"""

import os
import sys
from dataclasses import replace

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from config import ModelConfig, build_pipeline_config
from services.corpus import make_document, make_document_set, make_query
from services.modeling import QFASTransformer, Vocab


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv('QFAS_SEED', raising=False)


@pytest.fixture
def tiny_model_config():
    return ModelConfig(vocab_size=0, d_model=8, n_heads=2, n_enc_layers=1, n_dec_layers=1, d_ff=16,
                       dropout=0.0, label_smoothing=0.1, max_src_len=64, max_tgt_len=16, seed=3)


@pytest.fixture
def toy_vocab():
    return Vocab('the cat sat on mat dog ate food a b c d . what does eat'.split())


@pytest.fixture
def toy_query():
    return make_query('what does the cat eat')


@pytest.fixture
def toy_document():
    return make_document('doc-1', 'The cat sat on the mat. The dog ate food. A b c d.')


@pytest.fixture
def tiny_model(tiny_model_config, toy_vocab):
    return QFASTransformer(replace(tiny_model_config, vocab_size=len(toy_vocab)))


@pytest.fixture
def tiny_pipeline_config():
    """Pipeline settings small enough to train in seconds"""
    return build_pipeline_config({
        'seed': 7,
        'filter_budget_n': 40,
        'summary_budget': 20,
        'model': {'d_model': 16, 'n_heads': 2, 'n_enc_layers': 1, 'n_dec_layers': 1, 'd_ff': 32,
                  'dropout': 0.0, 'max_src_len': 64, 'max_tgt_len': 12},
        'train': {'steps': 3, 'pretrain_steps': 3, 'pretrain_examples': 6, 'batch_size': 4,
                  'warmup_steps': 1, 'extractive_steps': 2, 'log_interval': 1},
        'beam': {'beam_size': 2, 'max_len': 6},
    })


@pytest.fixture
def two_doc_set():
    return make_document_set(
        'set-1',
        'cat food',
        [('d0', 'The cat eats food. Dogs bark loudly. The weather is mild.'),
         ('d1', 'A cat likes fish. Food prices rise.')],
        ['The cat eats food. Cat likes fish.', 'Food for the cat.'],
    )
