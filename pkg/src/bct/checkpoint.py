"""Binary checkpoint format for named parameter sets.

Layout, all integers little-endian unsigned 32-bit:

    magic  b"BCT1"
    count  u32                      number of parameters
    then per parameter, in writing order:
        name_len u32, name bytes (UTF-8)
        rank     u32, dims u32 * rank
        values   f32 little-endian * prod(dims)

Values are always stored as float32. Reads are strict: bad magic, short
files, and trailing bytes all raise CheckpointError with the byte offset.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"BCT1"


class CheckpointError(ValueError):
    """Checkpoint file malformed or inconsistent with the target model."""


def save_checkpoint(params, path) -> None:
    """Write a name->array mapping (or a Model) to path.

    Order is preserved as given; Model registries therefore serialize in
    definition order, which keeps files byte-reproducible.
    """
    state = params.state() if hasattr(params, "state") else params
    chunks = [MAGIC, struct.pack("<I", len(state))]
    for name, value in state.items():
        arr = np.ascontiguousarray(np.asarray(value), dtype="<f4")
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_checkpoint(path) -> dict[str, np.ndarray]:
    """Parse a checkpoint into an ordered name->float32 array mapping."""
    buf = Path(path).read_bytes()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(
                f"{path}: truncated {what} at byte {pos}: need {n} bytes, have {len(buf) - pos}"
            )
        out = buf[pos : pos + n]
        pos += n
        return out

    if take(4, "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    (count,) = struct.unpack("<I", take(4, "parameter count"))
    state: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = struct.unpack("<I", take(4, f"name length of entry {i}"))
        try:
            name = take(name_len, f"name of entry {i}").decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"{path}: entry {i} name is not valid UTF-8") from e
        if name in state:
            raise CheckpointError(f"{path}: duplicate parameter {name!r}")
        (rank,) = struct.unpack("<I", take(4, f"rank of {name!r}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name!r}")) if rank else ()
        n_values = 1
        for d in dims:
            n_values *= d
        raw = take(4 * n_values, f"values of {name!r}")
        state[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes after entry {count - 1}")
    return state


def load_checkpoint(model, path) -> None:
    """Strictly load a checkpoint into a Model (names and shapes must match)."""
    try:
        model.load_state(read_checkpoint(path))
    except (KeyError, ValueError) as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"{path}: {e}") from e


def load_subset(model, path, prefix: str) -> list[str]:
    """Load only parameters under prefix (e.g. "backbone.").

    The file must contain exactly the model's parameters with that prefix,
    no more and no fewer. Returns the loaded names in registry order.
    """
    state = read_checkpoint(path)
    want = [n for n in model.params if n.startswith(prefix)]
    missing = sorted(set(want) - set(state))
    extra = sorted(n for n in state if n.startswith(prefix) and n not in want) + sorted(
        n for n in state if not n.startswith(prefix)
    )
    if missing or extra:
        raise CheckpointError(
            f"{path}: parameter set under {prefix!r} does not match model: "
            f"missing {missing}, unexpected {extra}"
        )
    for name in want:
        arr = state[name]
        t = model.params[name]
        if arr.shape != t.shape:
            raise CheckpointError(f"{path}: param {name!r} shape {arr.shape} != model {t.shape}")
        t.data[...] = arr.astype(t.dtype)
    return want
