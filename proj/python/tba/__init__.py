"""Importance-driven per-CTU bit allocation: toy intra codec, DQN agent, evaluation."""

from tba._tba import (  # noqa: F401
    QNetwork,
    allocate_frame,
    build_cache_files,
    dct2_8x8,
    encode_ctu,
    encode_frame,
    greedy_qp,
    qp_to_qstep,
    relative_saving,
    reward,
    signed_exp_golomb_bits,
    weighted_distortion,
)

__version__ = "0.1.0"
