"""JSON Lines dataset manifests: utterance records plus an optional noise dir."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass
class ManifestEntry:
    utt_id: str
    wav_path: Path
    speaker_id: str


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    noise_dir: Path | None = None

    def speakers(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.speaker_id, None)
        return list(seen)


def write_manifest(path, entries: list[ManifestEntry], noise_dir: Path | None = None):
    path = Path(path)
    lines = []
    if noise_dir is not None:
        lines.append(json.dumps({"noise_dir": str(noise_dir)}))
    for e in entries:
        lines.append(json.dumps({"utt_id": e.utt_id, "wav_path": str(e.wav_path),
                                 "speaker_id": e.speaker_id}))
    path.write_text("\n".join(lines) + "\n")


def load_manifest(path) -> Manifest:
    """Load and validate a manifest; relative paths resolve against its directory."""
    path = Path(path)
    root = path.parent
    entries: list[ManifestEntry] = []
    noise_dir: Path | None = None
    seen_ids: set[str] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        if "noise_dir" in rec:
            noise_dir = _resolve(root, rec["noise_dir"])
            if not noise_dir.is_dir():
                raise FileNotFoundError(f"noise_dir {noise_dir} does not exist")
            continue
        missing = {"utt_id", "wav_path", "speaker_id"} - rec.keys()
        if missing:
            raise ValueError(f"manifest line {lineno} missing fields: {sorted(missing)}")
        if rec["utt_id"] in seen_ids:
            raise ValueError(f"duplicate utt_id {rec['utt_id']!r} at line {lineno}")
        seen_ids.add(rec["utt_id"])
        wav = _resolve(root, rec["wav_path"])
        if not wav.is_file():
            raise FileNotFoundError(f"wav path {wav} does not exist")
        entries.append(ManifestEntry(rec["utt_id"], wav, str(rec["speaker_id"])))
    if not entries:
        raise ValueError(f"manifest {path} has no utterance records")
    return Manifest(entries, noise_dir)


def _resolve(root: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else root / p
