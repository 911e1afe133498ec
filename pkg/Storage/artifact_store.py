"""
Versioned little-endian binary artifacts for snapshot sets and reduced models.

Layout:
    magic "SEMRB" | version <H | kind <B | fingerprint 64s | n_arrays <I
    per array: name length <H | name utf-8 | dtype <B | ndim <B | shape ndim*<Q | data
"""

import logging
import os
import struct
from typing import Dict, Optional, Tuple

import numpy as np

from errors import (
    ArtifactFormatError, ArtifactVersionError, CorruptArtifactError, IncompatibleArtifactError,
    MissingArtifactError
)
from models import ArtifactHeader, PayloadKind, PodBasis, PodCriterion, RomOperators, SnapshotSet

logger = logging.getLogger(__name__)

MAGIC = b"SEMRB"
FORMAT_VERSION = 1
HEADER = struct.Struct("<5sHB64sI")

KIND_CODES = {PayloadKind.SNAPSHOTS: 1, PayloadKind.ROM: 2, PayloadKind.FIELD: 3}
DTYPE_CODES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}


def _dtype_code(array: np.ndarray) -> int:
    return 1 if np.issubdtype(array.dtype, np.integer) or array.dtype == bool else 0


def write_artifact(path: str, kind: PayloadKind, fingerprint: str, arrays: Dict[str, np.ndarray]) -> None:
    """Write named arrays under a header"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    chunks = [HEADER.pack(MAGIC, FORMAT_VERSION, KIND_CODES[kind], fingerprint.encode("ascii"), len(arrays))]
    for name, array in arrays.items():
        array = np.asarray(array)
        code = _dtype_code(array)
        data = np.ascontiguousarray(array, dtype=DTYPE_CODES[code])
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack("<BB", code, data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}Q", *data.shape))
        chunks.append(data.tobytes())

    with open(path, "wb") as handle:
        handle.write(b"".join(chunks))
    logger.info(f"Wrote {kind.value} artifact with {len(arrays)} arrays to {path}")


def read_artifact(
    path: str,
    kind: PayloadKind,
    fingerprint: Optional[str] = None,
    hint: str = "",
) -> Tuple[ArtifactHeader, Dict[str, np.ndarray]]:
    """
    Read and validate an artifact

    Args:
        path: File to read
        kind: Expected payload kind
        fingerprint: Expected discretization fingerprint (None skips the check)
        hint: Remediation hint for a missing file

    Returns:
        (header, arrays)
    """
    if not os.path.exists(path):
        raise MissingArtifactError(path, hint)
    with open(path, "rb") as handle:
        blob = handle.read()

    if blob[:len(MAGIC)] != MAGIC[:len(blob)]:
        raise ArtifactFormatError(f"{path} is not a SEMRB artifact")
    if len(blob) < HEADER.size:
        raise CorruptArtifactError(f"{path} is truncated inside the header")

    magic, version, kind_code, stored, n_arrays = HEADER.unpack_from(blob, 0)
    if version != FORMAT_VERSION:
        raise ArtifactVersionError(f"{path} has format version {version}, expected {FORMAT_VERSION}")
    kinds = {code: k for k, code in KIND_CODES.items()}
    if kind_code not in kinds:
        raise ArtifactFormatError(f"{path} has unknown payload kind {kind_code}")
    header = ArtifactHeader(
        magic=magic.decode("ascii"),
        version=version,
        fingerprint=stored.rstrip(b"\x00").decode("ascii"),
        kind=kinds[kind_code],
    )
    if header.kind != kind:
        raise IncompatibleArtifactError(f"{path} holds a {header.kind.value} payload, expected {kind.value}")
    if fingerprint is not None and header.fingerprint != fingerprint:
        raise IncompatibleArtifactError(
            f"{path} was built for a different discretization (fingerprint {header.fingerprint[:12]}..., "
            f"current {fingerprint[:12]}...)"
        )

    arrays: Dict[str, np.ndarray] = {}
    offset = HEADER.size
    try:
        for _ in range(n_arrays):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            code, ndim = struct.unpack_from("<BB", blob, offset)
            offset += 2
            shape = struct.unpack_from(f"<{ndim}Q", blob, offset)
            offset += 8 * ndim
            dtype = DTYPE_CODES[code]
            count = int(np.prod(shape)) if ndim else 1
            nbytes = count * dtype.itemsize
            if offset + nbytes > len(blob):
                raise CorruptArtifactError(f"{path} is truncated inside array '{name}'")
            arrays[name] = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
            offset += nbytes
    except (struct.error, KeyError, UnicodeDecodeError) as e:
        raise CorruptArtifactError(f"{path} is corrupt: {e}")

    return header, arrays


def save_snapshots(path: str, snapshots: SnapshotSet) -> None:
    write_artifact(
        path,
        PayloadKind.SNAPSHOTS,
        snapshots.fingerprint,
        {
            "parameters": np.asarray(snapshots.parameters, dtype=float),
            "states": snapshots.states,
            "interior": snapshots.interior,
        },
    )


def load_snapshots(path: str, fingerprint: Optional[str] = None) -> SnapshotSet:
    header, arrays = read_artifact(path, PayloadKind.SNAPSHOTS, fingerprint, hint="Run the 'offline' subcommand first.")
    try:
        return SnapshotSet(
            parameters=arrays["parameters"].tolist(),
            states=arrays["states"],
            interior=arrays["interior"],
            fingerprint=header.fingerprint,
        )
    except KeyError as e:
        raise CorruptArtifactError(f"{path} is missing array {e}")


def _pod_arrays(prefix: str, pod: PodBasis) -> Dict[str, np.ndarray]:
    return {
        f"{prefix}_modes": pod.modes,
        f"{prefix}_singular_values": pod.singular_values,
        f"{prefix}_info": np.array([pod.n_modes, pod.energy_fraction, float(pod.criterion == PodCriterion.MODE_FRACTION)]),
    }


def _pod_from(prefix: str, arrays: Dict[str, np.ndarray]) -> PodBasis:
    info = arrays[f"{prefix}_info"]
    return PodBasis(
        modes=arrays[f"{prefix}_modes"],
        singular_values=arrays[f"{prefix}_singular_values"],
        n_modes=int(info[0]),
        energy_fraction=float(info[1]),
        criterion=PodCriterion.MODE_FRACTION if info[2] else PodCriterion.ENERGY,
    )


ROM_ARRAYS = ("k_visc", "k_fixed", "t_lift", "t_conv", "rhs_force", "rhs_visc", "rhs_fixed", "rhs_lift", "rhs_conv")


def save_rom(path: str, state_pod: PodBasis, interior_pod: PodBasis, ops: RomOperators) -> None:
    arrays = {**_pod_arrays("state", state_pod), **_pod_arrays("interior", interior_pod)}
    arrays.update({name: getattr(ops, name) for name in ROM_ARRAYS})
    write_artifact(path, PayloadKind.ROM, ops.fingerprint, arrays)


def load_rom(path: str, fingerprint: Optional[str] = None) -> Tuple[PodBasis, PodBasis, RomOperators]:
    """
    Load the PODs and reduced operators

    Returns:
        (state POD, interior POD, operators)
    """
    header, arrays = read_artifact(path, PayloadKind.ROM, fingerprint, hint="Run the 'offline' subcommand to build it.")
    try:
        state_pod = _pod_from("state", arrays)
        interior_pod = _pod_from("interior", arrays)
        ops = RomOperators(
            n_modes=state_pod.n_modes,
            n_interior=interior_pod.n_modes,
            fingerprint=header.fingerprint,
            **{name: arrays[name] for name in ROM_ARRAYS},
        )
    except KeyError as e:
        raise CorruptArtifactError(f"{path} is missing array {e}")
    return state_pod, interior_pod, ops
