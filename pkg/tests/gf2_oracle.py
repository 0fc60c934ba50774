"""Independent brute-force oracle for the GF(2) byte automaton.

Everything here works on explicit 0/1 bit matrices and vectors with nested
loops — deliberately nothing shared with the byte-level implementation it
checks against.
"""

from __future__ import annotations


def bit_matrix(rows: bytes) -> list[list[int]]:
    """Row bytes to an explicit 8x8 matrix; entry (i, j) = bit (7-j) of row i."""
    return [[(rows[i] >> (7 - j)) & 1 for j in range(8)] for i in range(8)]


def state_vector(state: int) -> list[int]:
    """MSB-first bit vector of a state byte: v[i] = bit (7-i)."""
    return [(state >> (7 - i)) & 1 for i in range(8)]


def vector_to_byte(vector: list[int]) -> int:
    out = 0
    for j in range(8):
        out |= vector[j] << (7 - j)
    return out


def oracle_step(rows: bytes, state: int, byte: int) -> int:
    """Matrix-vector product over GF(2), then add the input byte."""
    matrix = bit_matrix(rows)
    v = state_vector(state)
    product = []
    for j in range(8):
        acc = 0
        for i in range(8):
            acc ^= v[i] & matrix[i][j]
        product.append(acc)
    return vector_to_byte(product) ^ byte


def oracle_signature(
    stream: bytes, sign_len: int, name_len: int, matrices: tuple[bytes, bytes]
) -> tuple[bytes, str]:
    """Straight-line replay of the secret-file construction."""
    signature = [0] * sign_len
    state = 0
    pos = 0
    matr_numb = 0
    for byte in stream:
        state = oracle_step(matrices[matr_numb], state, byte)
        matr_numb = (matr_numb + 1) % 2
        signature[pos] = state
        pos = (pos + 1) % sign_len
    sig_bytes = bytes(signature)
    return sig_bytes, sig_bytes[:name_len].hex()


def gf2_invertible(rows: bytes) -> bool:
    """Gaussian elimination over GF(2) on the row bytes."""
    m = list(rows)
    rank = 0
    for col in range(7, -1, -1):
        pivot = None
        for r in range(rank, 8):
            if (m[r] >> col) & 1:
                pivot = r
                break
        if pivot is None:
            return False
        m[rank], m[pivot] = m[pivot], m[rank]
        for r in range(8):
            if r != rank and (m[r] >> col) & 1:
                m[r] ^= m[rank]
        rank += 1
    return True
