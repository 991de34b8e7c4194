"""Question-title generation from problem descriptions and code snippets."""

# The extension links against libtorch; importing torch first loads its shared libraries.
import torch  # noqa: F401

from ._titleforge import (  # noqa: F401
    Error,
    Generator,
    InvalidInput,
    Tokenizer,
    bleu,
    cider,
    meteor,
    read_split,
    rouge_l,
    score_all,
    split_sizes,
    train,
)

__version__ = "0.1.0"
