"""Matrix Market reading and writing (real general/symmetric, coordinate/array)."""

from __future__ import annotations

import numpy as np

from .errors import MatrixMarketError
from .sparse import SparseMatrix

_BANNER = "%%matrixmarket"


def _data_lines(fh, start_lineno):
    """Yield (lineno, tokens) for non-comment, non-blank lines."""
    for lineno, line in enumerate(fh, start=start_lineno):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        yield lineno, s.split()


def _parse_number(tok, lineno, kind):
    try:
        return int(tok) if kind == "int" else float(tok)
    except ValueError:
        raise MatrixMarketError(f"cannot parse {tok!r} as {kind}", lineno) from None


def read_matrix_market(path) -> SparseMatrix:
    """Read a real Matrix Market file into a canonical :class:`SparseMatrix`.

    Symmetric storage is expanded and duplicate coordinate entries are summed;
    zeros of array files are not stored. Pattern, integer, complex and hermitian files
    are rejected.
    """
    with open(path, "r") as fh:
        header = fh.readline()
        parts = header.strip().lower().split()
        if len(parts) != 5 or parts[0] != _BANNER or parts[1] != "matrix":
            raise MatrixMarketError(f"bad banner {header.strip()!r}", 1)
        fmt, field, symmetry = parts[2], parts[3], parts[4]
        if fmt not in ("coordinate", "array"):
            raise MatrixMarketError(f"unsupported format {fmt!r}", 1)
        if field not in ("real", "double"):
            raise MatrixMarketError(f"unsupported field {field!r}", 1)
        if symmetry not in ("general", "symmetric"):
            raise MatrixMarketError(f"unsupported symmetry {symmetry!r}", 1)

        lines = _data_lines(fh, 2)
        try:
            lineno, size = next(lines)
        except StopIteration:
            raise MatrixMarketError("missing size line", 2) from None
        want = 3 if fmt == "coordinate" else 2
        if len(size) != want:
            raise MatrixMarketError(f"size line needs {want} integers", lineno)
        dims = [_parse_number(t, lineno, "int") for t in size]
        rows, cols = dims[0], dims[1]
        if rows < 0 or cols < 0:
            raise MatrixMarketError("negative dimension", lineno)
        if symmetry == "symmetric" and rows != cols:
            raise MatrixMarketError("symmetric matrix must be square", lineno)

        if fmt == "coordinate":
            nnz = dims[2]
            ri = np.empty(nnz, dtype=np.int64)
            ci = np.empty(nnz, dtype=np.int64)
            vals = np.empty(nnz, dtype=np.float64)
            count = 0
            for lineno, toks in lines:
                if count >= nnz:
                    raise MatrixMarketError("more entries than declared", lineno)
                if len(toks) != 3:
                    raise MatrixMarketError("coordinate entry needs 'row col value'", lineno)
                i = _parse_number(toks[0], lineno, "int")
                j = _parse_number(toks[1], lineno, "int")
                if not (1 <= i <= rows and 1 <= j <= cols):
                    raise MatrixMarketError(f"index ({i}, {j}) out of range", lineno)
                if symmetry == "symmetric" and j > i:
                    raise MatrixMarketError("symmetric file must store the lower triangle", lineno)
                ri[count], ci[count] = i - 1, j - 1
                vals[count] = _parse_number(toks[2], lineno, "float")
                count += 1
            if count != nnz:
                raise MatrixMarketError(f"file ends after {count} of {nnz} entries", lineno)
        else:
            # column-major; symmetric arrays list only the lower triangle
            if symmetry == "symmetric":
                pos = [(i, j) for j in range(cols) for i in range(j, rows)]
            else:
                pos = [(i, j) for j in range(cols) for i in range(rows)]
            vals = np.empty(len(pos), dtype=np.float64)
            count = 0
            for lineno, toks in lines:
                for tok in toks:
                    if count >= len(pos):
                        raise MatrixMarketError("more entries than declared", lineno)
                    vals[count] = _parse_number(tok, lineno, "float")
                    count += 1
            if count != len(pos):
                raise MatrixMarketError(f"file ends after {count} of {len(pos)} entries", lineno)
            idx = np.array(pos, dtype=np.int64).reshape(-1, 2)
            keep = vals != 0.0
            ri, ci, vals = idx[keep, 0], idx[keep, 1], vals[keep]

    if symmetry == "symmetric":
        off = ri != ci
        ri, ci, vals = (
            np.concatenate([ri, ci[off]]),
            np.concatenate([ci, ri[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return SparseMatrix.from_coo(rows, cols, ri, ci, vals)


def write_matrix_market(path, m: SparseMatrix, comment=None):
    """Write ``m`` as a general real coordinate file (values with repr precision)."""
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{m.rows} {m.cols} {m.nnz}\n")
        row_ids = np.repeat(np.arange(m.rows), np.diff(m.indptr))
        for i, j, v in zip(row_ids, m.indices, m.data):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def write_array(path, a, comment=None):
    """Write a dense vector or matrix as a Matrix Market array file."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{a.shape[0]} {a.shape[1]}\n")
        for v in a.ravel(order="F"):
            fh.write(f"{float(v)!r}\n")


def read_array(path) -> np.ndarray:
    """Read a Matrix Market file as a dense 2-D array."""
    return read_matrix_market(path).toarray()
