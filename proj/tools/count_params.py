#!/usr/bin/env python3
"""Independent parameter count for a model configuration.

Counts from the architecture definition alone (no C++ involved); the unit
tests pin the number this prints for the micro preset.

Usage: count_params.py [layers dim heads mlp_ratio patch target_dim]
"""
import sys


def block_params(dim: int, mlp_ratio: int) -> int:
    ln = 2 * (2 * dim)                     # ln1, ln2: gamma + beta
    attn = 4 * (dim * dim + dim)           # wq, wk, wv, wo with biases
    hidden = dim * mlp_ratio
    mlp = dim * hidden + hidden + hidden * dim + dim
    return ln + attn + mlp


def count(layers: int, dim: int, heads: int, mlp_ratio: int, patch: int, target_dim: int) -> int:
    del heads  # head count does not change the parameter count
    total = (patch * patch * 3) * dim + dim          # patch embedding
    total += layers * block_params(dim, mlp_ratio)   # encoder blocks
    total += 2 * dim                                 # final encoder LN
    total += dim                                     # mask token
    total += block_params(dim, mlp_ratio)            # decoder block
    total += dim * target_dim + target_dim           # head FC
    total += 2 * target_dim                          # head LN
    return total


if __name__ == "__main__":
    args = [int(a) for a in sys.argv[1:]] or [4, 64, 4, 4, 4, 64]
    print(count(*args))
