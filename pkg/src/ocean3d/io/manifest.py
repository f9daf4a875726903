"""Daily dataset manifests and chronological splits."""
from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass

from ..errors import BadBoundary, EmptyManifest, FormatViolation, IoFailure

EPOCH = dt.date(1970, 1, 1)


def epoch_day(date):
    return (date - EPOCH).days


def day_to_date(day):
    return EPOCH + dt.timedelta(days=int(day))


@dataclass(frozen=True)
class ManifestEntry:
    day: int
    ocean: str
    forcing: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    root: str = "."
    train_end: int | None = None
    valid_end: int | None = None

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        for a, b in zip(entries, entries[1:]):
            if b.day != a.day + 1:
                raise FormatViolation(f"manifest days must be consecutive; {a.day} is followed by {b.day}")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def days(self):
        return [e.day for e in self.entries]

    @property
    def first_day(self):
        return self.entries[0].day

    @property
    def last_day(self):
        return self.entries[-1].day

    def entry(self, day):
        if not self.entries or not (self.first_day <= day <= self.last_day):
            raise KeyError(day)
        return self.entries[day - self.first_day]

    def __contains__(self, day):
        return bool(self.entries) and self.first_day <= day <= self.last_day

    def ocean_path(self, day):
        return os.path.join(self.root, self.entry(day).ocean)

    def forcing_path(self, day):
        return os.path.join(self.root, self.entry(day).forcing)

    def subset(self, entries):
        return DatasetManifest(tuple(entries), self.root, self.train_end, self.valid_end)


def split_dataset(manifest, train_end_day, valid_end_day):
    """Chronological (train, valid, test) split; boundary days are inclusive upper ends."""
    if not manifest.entries:
        raise EmptyManifest("cannot split an empty manifest")
    if not train_end_day < valid_end_day:
        raise BadBoundary(f"train end {train_end_day} must precede validation end {valid_end_day}")
    if not (manifest.first_day <= train_end_day and valid_end_day <= manifest.last_day):
        raise BadBoundary(
            f"boundaries ({train_end_day}, {valid_end_day}) fall outside days "
            f"{manifest.first_day}..{manifest.last_day}")
    train = [e for e in manifest if e.day <= train_end_day]
    valid = [e for e in manifest if train_end_day < e.day <= valid_end_day]
    test = [e for e in manifest if e.day > valid_end_day]
    return manifest.subset(train), manifest.subset(valid), manifest.subset(test)


def write_manifest(manifest, path):
    lines = [f"{e.day}\t{e.ocean}\t{e.forcing}\n" for e in manifest]
    try:
        with open(path, "w", newline="\n") as fh:
            fh.writelines(lines)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_manifest(path, train_end=None, valid_end=None):
    """Parse a TAB-separated manifest; entry paths resolve relative to its directory."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    entries = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatViolation(f"{path}:{n}: expected 3 TAB-separated fields")
        try:
            day = int(parts[0])
        except ValueError:
            raise FormatViolation(f"{path}:{n}: bad day index {parts[0]!r}") from None
        entries.append(ManifestEntry(day, parts[1], parts[2]))
    return DatasetManifest(tuple(entries), os.path.dirname(os.path.abspath(path)), train_end, valid_end)
