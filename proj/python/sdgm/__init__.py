"""Spectral dictionary generative model.

Thin package over the compiled ``_core`` extension::

    import sdgm
    cfg = sdgm.Config(epochs=2)
    model = sdgm.train(open("corpus.txt").read(), cfg)
    print(model.generate(length=20, seed=7))
"""

from ._core import (
    Config,
    Model,
    SdgmError,
    Vocab,
    bench_scaling,
    build_vocab,
    decode,
    decode_atoms,
    encode,
    fit_gmm,
    grad_check,
    stft_magnitude,
    synthesize_atoms,
    train,
)

__all__ = [
    "Config",
    "Model",
    "SdgmError",
    "Vocab",
    "bench_scaling",
    "build_vocab",
    "decode",
    "decode_atoms",
    "encode",
    "fit_gmm",
    "grad_check",
    "stft_magnitude",
    "synthesize_atoms",
    "train",
]
