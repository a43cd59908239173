import numpy as np
import pytest

from src.core.codebook_store import CodebookStore
from src.models.codec_model import CodecConfig, RoundingMode


@pytest.fixture(scope="session")
def store():
    # 整个测试会话共用，码本只训练一次
    return CodebookStore()


@pytest.fixture(scope="session")
def cfg_128():
    return CodecConfig(128, 3, 1, RoundingMode.LOCAL3X3, rotation_seed=11)


@pytest.fixture(scope="session")
def books_128(store, cfg_128):
    return store.books_for(cfg_128)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
