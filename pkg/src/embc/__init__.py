"""Word-embedding compression toolkit.

Submodules:
    embio     -- dense embedding matrices: text/binary I/O, subsetting
    lloyd     -- per-dimension adaptive level quantization
    wta       -- sparse non-negative autoencoder training (winner-take-all)
    codec     -- bit-budget serialization of sparse code vectors
    lsh       -- random-hyperplane bit signatures under the same bit budget
    evaluate  -- word-similarity and word-analogy evaluation
    cli       -- command-line driver

This package intentionally imports nothing heavy here so the CLI can
configure thread limits before numpy loads.
"""

__version__ = "0.1.0"

__all__ = ["embio", "lloyd", "wta", "codec", "lsh", "evaluate", "cli"]
