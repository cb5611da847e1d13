"""Binarization, bit packing, and Hamming-distance arithmetic.

Codes are bipolar (+1/-1); bit value 1 maps to +1. Packed rows use 64-bit
words, MSB-first within each word, so descriptor files are bit-exact across
platforms.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DataError

_WORD = 64
_POWERS = (np.uint64(1) << np.arange(63, -1, -1, dtype=np.uint64))


def sign_vec(v):
    """Bipolar sign with the pinned convention sign(0) = +1."""
    v = np.asarray(v)
    if not np.all(np.isfinite(v)):
        raise DataError("sign_vec: non-finite entry")
    return np.where(v >= 0, 1, -1).astype(np.int8)


def softsign_scalar(a, gamma):
    """Scalar smoothed sign a/(|a|+gamma); tensor.softsign is the AD twin."""
    from .errors import ConfigError

    if gamma <= 0:
        raise ConfigError(f"softsign gamma must be > 0, got {gamma}")
    a = np.asarray(a, dtype=np.float64)
    return a / (np.abs(a) + gamma)


class BitMatrix:
    """N x n_bits bipolar codes packed into 64-bit words per row."""

    def __init__(self, words, n_bits):
        words = np.asarray(words, dtype=np.uint64)
        if words.ndim != 2:
            raise ContractError("BitMatrix words must be 2-d")
        need = (n_bits + _WORD - 1) // _WORD
        if words.shape[1] != need:
            raise ContractError(
                f"BitMatrix: {words.shape[1]} words per row, need {need} for {n_bits} bits"
            )
        self.words = words
        self.n_bits = int(n_bits)
        self._check_padding()

    def _check_padding(self):
        pad = self.words.shape[1] * _WORD - self.n_bits
        if pad:
            mask = np.uint64((1 << pad) - 1)
            if np.any(self.words[:, -1] & mask):
                raise ContractError("BitMatrix: nonzero padding bits")

    @property
    def n_rows(self):
        return self.words.shape[0]

    @classmethod
    def pack(cls, bipolar):
        """Pack an N x n_bits matrix of +1/-1 entries."""
        bipolar = np.asarray(bipolar)
        if bipolar.ndim != 2:
            raise ContractError("pack expects a 2-d bipolar matrix")
        if not np.all(np.abs(bipolar) == 1):
            raise DataError("pack: entries must be +1 or -1")
        n, k = bipolar.shape
        n_words = (k + _WORD - 1) // _WORD
        bits = np.zeros((n, n_words * _WORD), dtype=np.uint64)
        bits[:, :k] = (bipolar > 0)
        words = (bits.reshape(n, n_words, _WORD) * _POWERS).sum(axis=2, dtype=np.uint64)
        return cls(words, k)

    def unpack(self):
        """Back to an N x n_bits int8 bipolar matrix."""
        n, n_words = self.words.shape
        shifts = np.arange(63, -1, -1, dtype=np.uint64)
        bits = ((self.words[:, :, None] >> shifts) & np.uint64(1)).reshape(n, n_words * _WORD)
        bip = np.where(bits[:, : self.n_bits] == 1, 1, -1).astype(np.int8)
        return bip

    def row(self, i):
        return BitMatrix(self.words[i : i + 1], self.n_bits)

    def __eq__(self, other):
        return (
            isinstance(other, BitMatrix)
            and self.n_bits == other.n_bits
            and np.array_equal(self.words, other.words)
        )


def hamming_from_dot(dot, m):
    """Hamming distance from a bipolar dot product: -0.5 * (dot - m)."""
    dot = int(dot)
    if abs(dot) > m:
        raise ContractError(f"dot {dot} out of range for m={m}")
    if (dot - m) % 2:
        raise ContractError(f"dot {dot} has wrong parity for m={m}")
    return (m - dot) // 2


def hamming_distances(query, db):
    """Hamming distances from one packed query row to every db row."""
    if query.n_bits != db.n_bits:
        raise ContractError("query/db code length mismatch")
    x = np.bitwise_xor(db.words, query.words[0])
    return np.bitwise_count(x).sum(axis=1).astype(np.int64)


def save_descriptors(bm, path, labels=None):
    """Write a BGBD descriptor file (optionally with int32 labels)."""
    from .io_formats import Writer

    w = Writer("BGBD")
    w.u64(bm.n_rows)
    w.u32(bm.n_bits)
    if labels is None:
        w.u8(0)
    else:
        labels = np.asarray(labels, dtype=np.int32)
        if labels.shape != (bm.n_rows,):
            raise ContractError("labels must have one entry per row")
        w.u8(1)
        w.array(labels)
    w.array(bm.words)
    return w.write(path)


def load_descriptors(path):
    """Read a BGBD file; returns (BitMatrix, labels-or-None)."""
    from .io_formats import Reader

    r = Reader.open(path, "BGBD")
    n_rows = r.u64()
    n_bits = r.u32()
    labels = None
    if r.u8():
        labels = r.array(np.int32, (n_rows,))
    n_words = (n_bits + _WORD - 1) // _WORD
    words = r.array(np.uint64, (n_rows, n_words))
    r.expect_exhausted()
    return BitMatrix(words, n_bits), labels


def hamming_search(query, db, k):
    """k nearest db rows by Hamming distance; ties break by ascending index.

    Returns parallel (indices, distances) arrays; k is clipped to the
    database size.
    """
    d = hamming_distances(query, db)
    k = min(int(k), d.shape[0])
    order = np.argsort(d, kind="stable")[:k]
    return order, d[order]
