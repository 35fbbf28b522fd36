"""Line-oriented explicit-state files.

``<prefix>.states``  ``state_count N`` and ``initial I`` lines
``<prefix>.tra``     one ``source target probability`` triple per line
``<prefix>.lab``     one ``label: i1 i2 ...`` line per label
``<prefix>.<name>.rew``  optional, one ``state value`` pair per line
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dtmc import Dtmc, DtmcError, RewardStructure, build_dtmc


class ModelFormatError(DtmcError):
    pass


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _paths(prefix):
    prefix = Path(prefix)
    return (prefix.with_name(prefix.name + ".states"),
            prefix.with_name(prefix.name + ".tra"),
            prefix.with_name(prefix.name + ".lab"))


def export_explicit(d: Dtmc, prefix, rewards=()) -> list[Path]:
    states_p, tra_p, lab_p = _paths(prefix)
    states_p.parent.mkdir(parents=True, exist_ok=True)
    states_p.write_text(f"state_count {d.state_count}\ninitial {d.initial}\n")
    with tra_p.open("w") as fh:
        for s, t, p in d.transitions():
            fh.write(f"{s} {t} {_num(p)}\n")
    with lab_p.open("w") as fh:
        for name in sorted(d.labels):
            fh.write(name + ":" + "".join(f" {i}" for i in sorted(d.labels[name])) + "\n")
    written = [states_p, tra_p, lab_p]
    for r in rewards:
        rp = Path(prefix).with_name(f"{Path(prefix).name}.{r.name}.rew")
        with rp.open("w") as fh:
            for s in sorted(r.rewards):
                if r.rewards[s]:
                    fh.write(f"{s} {_num(r.rewards[s])}\n")
        written.append(rp)
    return written


def _lines(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelFormatError(f"{path}: {exc.strerror or exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def import_explicit(prefix) -> tuple[Dtmc, dict[str, RewardStructure]]:
    states_p, tra_p, lab_p = _paths(prefix)
    header = {}
    for lineno, line in _lines(states_p):
        key, _, value = line.partition(" ")
        try:
            header[key] = int(value)
        except ValueError:
            raise ModelFormatError(f"{states_p}:{lineno}: expected '<key> <integer>'") from None
    if "state_count" not in header or "initial" not in header:
        raise ModelFormatError(f"{states_p}: needs 'state_count' and 'initial' lines")

    src, dst, prob = [], [], []
    for lineno, line in _lines(tra_p):
        parts = line.split()
        if len(parts) != 3:
            raise ModelFormatError(f"{tra_p}:{lineno}: expected 'source target probability'")
        try:
            src.append(int(parts[0]))
            dst.append(int(parts[1]))
            prob.append(float(parts[2]))
        except ValueError:
            raise ModelFormatError(f"{tra_p}:{lineno}: malformed number") from None

    labels = {}
    if lab_p.exists():
        for lineno, line in _lines(lab_p):
            name, sep, rest = line.partition(":")
            if not sep or not name.strip():
                raise ModelFormatError(f"{lab_p}:{lineno}: expected 'label: i1 i2 ...'")
            try:
                labels[name.strip()] = [int(tok) for tok in rest.split()]
            except ValueError:
                raise ModelFormatError(f"{lab_p}:{lineno}: malformed state index") from None

    d = build_dtmc(header["state_count"], header["initial"],
                   (np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(prob)), labels)

    rewards = {}
    stem = Path(prefix).name + "."
    for rp in sorted(Path(prefix).parent.glob(stem + "*.rew")):
        name = rp.name[len(stem):-len(".rew")]
        values = {}
        for lineno, line in _lines(rp):
            parts = line.split()
            if len(parts) != 2:
                raise ModelFormatError(f"{rp}:{lineno}: expected 'state value'")
            values[int(parts[0])] = float(parts[1])
        rewards[name] = RewardStructure(name, values)
    return d, rewards
