"""Checkpoint archives: one zip per ensemble member.

Layout (format version 1):
    manifest.json       {"format_version", "spec", "metadata", "arrays": [{"name", "file", "shape", "dtype"}]}
    arrays/00000.npy    one .npy per state-dict entry, in manifest order
"""

import io
import logging
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import torch
from pydantic import ValidationError

from src.ensemble import EnsembleMember, MemberSpec, build_member, parameter_digest
from src.utils.json_utils import dumps_stable, is_valid_json

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


class CheckpointError(ValueError):
    """Base class for checkpoint failures."""


class CheckpointVersionError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass
class ModelState:
    spec: MemberSpec
    arrays: Dict[str, np.ndarray]
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return parameter_digest(self.arrays)


def member_state(member: EnsembleMember, metadata: Optional[Dict[str, Any]] = None) -> ModelState:
    arrays = {name: t.detach().cpu().numpy().copy() for name, t in member.state_dict().items()}
    meta = dict(metadata or {})
    meta["digest"] = parameter_digest(arrays)
    return ModelState(member.spec, arrays, meta)


def restore_member(state: ModelState) -> EnsembleMember:
    """Rebuild a member from its spec and load the stored arrays."""
    member = build_member(state.spec)
    floating = [arr for arr in state.arrays.values() if np.issubdtype(arr.dtype, np.floating)]
    if floating:
        member = member.to(torch.from_numpy(np.array(floating[0])).dtype)
    _check_shapes(state, member)
    member.load_state_dict({name: torch.from_numpy(np.array(arr)) for name, arr in state.arrays.items()})
    member.eval()
    return member


def _check_shapes(state: ModelState, member: EnsembleMember) -> None:
    expected = {name: tuple(t.shape) for name, t in member.state_dict().items()}
    stored = {name: tuple(arr.shape) for name, arr in state.arrays.items()}
    if expected.keys() != stored.keys():
        missing = sorted(expected.keys() - stored.keys())[:5]
        extra = sorted(stored.keys() - expected.keys())[:5]
        raise CheckpointShapeError(f"shape mismatch: missing arrays {missing}, unexpected arrays {extra}")
    for name, shape in expected.items():
        if stored[name] != shape:
            raise CheckpointShapeError(f"shape mismatch for {name}: checkpoint {stored[name]}, model {shape}")


def save_checkpoint(state: ModelState, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    # fixed timestamps keep archives byte-identical across runs
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for index, (name, arr) in enumerate(state.arrays.items()):
            arr = np.ascontiguousarray(arr)
            member_name = f"arrays/{index:05d}.npy"
            buf = io.BytesIO()
            np.save(buf, arr, allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(member_name, date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())
            entries.append({"name": name, "file": member_name, "shape": list(arr.shape), "dtype": str(arr.dtype)})
        manifest = {
            "format_version": FORMAT_VERSION,
            "spec": state.spec.model_dump(mode="json"),
            "metadata": state.metadata,
            "arrays": entries,
        }
        zf.writestr(zipfile.ZipInfo(MANIFEST_NAME, date_time=(1980, 1, 1, 0, 0, 0)), dumps_stable(manifest))
    logger.info(f"Saved checkpoint {path} ({len(entries)} arrays)")
    return path


def _read_manifest(zf: zipfile.ZipFile, path: Path) -> Dict[str, Any]:
    try:
        raw = zf.read(MANIFEST_NAME)
    except KeyError:
        raise CorruptCheckpointError(f"corrupt manifest: {path} has no {MANIFEST_NAME}") from None
    ok, manifest = is_valid_json(raw)
    if not ok or not isinstance(manifest, dict):
        raise CorruptCheckpointError(f"corrupt manifest in {path}: {manifest}")
    for key in ("format_version", "spec", "metadata", "arrays"):
        if key not in manifest:
            raise CorruptCheckpointError(f"corrupt manifest in {path}: missing key {key!r}")
    return manifest


def load_checkpoint(path: Union[str, Path], spec: Optional[MemberSpec] = None) -> ModelState:
    """
    Load a checkpoint archive.

    Args:
        path: Archive path
        spec: If given, arrays must fit a member built from this spec

    Raises:
        FileNotFoundError, CheckpointVersionError, CorruptCheckpointError, CheckpointShapeError
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path, "r") as zf:
            manifest = _read_manifest(zf, path)
            version = manifest["format_version"]
            if version != FORMAT_VERSION:
                raise CheckpointVersionError(
                    f"Checkpoint {path} has format version {version}, expected {FORMAT_VERSION}"
                )
            arrays: Dict[str, np.ndarray] = {}
            for entry in manifest["arrays"]:
                arr = np.load(io.BytesIO(zf.read(entry["file"])), allow_pickle=False)
                if list(arr.shape) != list(entry["shape"]) or str(arr.dtype) != entry["dtype"]:
                    raise CorruptCheckpointError(
                        f"corrupt manifest in {path}: array {entry['name']} is {arr.shape}/{arr.dtype}, "
                        f"manifest says {entry['shape']}/{entry['dtype']}"
                    )
                arrays[entry["name"]] = arr
            stored_spec = MemberSpec.model_validate(manifest["spec"])
    except CheckpointError:
        raise
    except ValidationError as e:
        raise CorruptCheckpointError(f"corrupt manifest in {path}: invalid spec ({e.error_count()} errors)") from e
    except (zipfile.BadZipFile, KeyError, TypeError, ValueError, OSError, EOFError) as e:
        raise CorruptCheckpointError(f"corrupt manifest in {path}: {e}") from e

    state = ModelState(stored_spec, arrays, dict(manifest["metadata"]))
    if spec is not None:
        _check_shapes(state, build_member(spec))
        state.spec = spec
    return state


def load_members(paths) -> list:
    """Restore every checkpoint in `paths` as an eval-mode member."""
    return [restore_member(load_checkpoint(p)) for p in paths]
