"""Registrable-domain (eTLD+1) extraction against a public suffix list.

Implements the standard suffix-matching algorithm: the prevailing rule is
an exception rule if any matches, otherwise the matching rule with the
most labels; wildcard labels (``*``) match exactly one label. A bundled
snapshot of common rules ships with the package; callers can load a full
list from disk instead.

By default a hostname whose TLD appears nowhere in the list is rejected
(treated as not a real registrable domain). Passing ``implicit_star=True``
restores the reference semantics where unlisted TLDs are themselves
suffixes, which is what the upstream conformance vectors assume.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources


def _ascii_label(label: str) -> str:
    """Canonical (punycode) form of one lowercase label, for matching."""
    if label.isascii():
        return label
    try:
        return label.encode("idna").decode("ascii")
    except UnicodeError:
        return label


def _canonical(labels: tuple[str, ...]) -> str:
    return ".".join(_ascii_label(lb) for lb in labels)


@dataclass(frozen=True)
class SuffixSet:
    """Parsed suffix rules, keyed by canonical (punycode) form."""

    exact: frozenset[str]
    wildcard: frozenset[str]  # stored without the leading "*."
    exception: frozenset[str]  # stored without the leading "!"

    @classmethod
    def from_text(cls, text: str) -> "SuffixSet":
        exact: set[str] = set()
        wildcard: set[str] = set()
        exception: set[str] = set()
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("//"):
                continue
            line = line.split()[0].lower()
            if line.startswith("!"):
                target = exception
                line = line[1:]
            elif line.startswith("*."):
                target = wildcard
                line = line[2:]
            else:
                target = exact
            target.add(_canonical(tuple(line.split("."))))
        return cls(frozenset(exact), frozenset(wildcard), frozenset(exception))

    @classmethod
    def from_file(cls, path: str) -> "SuffixSet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


@lru_cache(maxsize=1)
def default_suffixes() -> SuffixSet:
    """Bundled snapshot covering common registries."""
    text = resources.files("flocpriv.data").joinpath("public_suffix_list.dat").read_text("utf-8")
    return SuffixSet.from_text(text)


def _strip_host(host: str) -> str | None:
    host = host.strip().lower()
    if host.endswith("."):
        host = host[:-1]
    if host.startswith("["):  # bracketed IPv6 literal
        return None
    if ":" in host:  # port suffix or bare IPv6 literal
        head, _, tail = host.rpartition(":")
        if not tail.isdigit() or ":" in head:
            return None
        host = head
    return host or None


def _is_ipv4(labels: tuple[str, ...]) -> bool:
    return len(labels) == 4 and all(lb.isdigit() for lb in labels)


def _valid_label(label: str) -> bool:
    """Hostname labels: nonempty, and LDH (plus underscore) once punycoded."""
    if not label:
        return False
    ascii_form = _ascii_label(label)
    return all(c.isalnum() or c in "-_" for c in ascii_form) and ascii_form.isascii()


def _suffix_label_count(labels: tuple[str, ...], suffixes: SuffixSet, implicit_star: bool) -> int | None:
    """Number of labels in the prevailing public suffix, or None."""
    n = len(labels)
    for i in range(n):
        if _canonical(labels[i:]) in suffixes.exception:
            # An exception rule wins outright; its suffix is the rule
            # minus its leftmost label.
            return n - i - 1
    best = 0
    matched = False
    for i in range(n):
        if _canonical(labels[i:]) in suffixes.exact:
            best = max(best, n - i)
            matched = True
    for i in range(n - 1):
        if _canonical(labels[i + 1 :]) in suffixes.wildcard:
            best = max(best, n - i)
            matched = True
    if matched:
        return best
    return 1 if implicit_star else None


def registrable_domain(
    host: str,
    suffixes: SuffixSet | None = None,
    *,
    implicit_star: bool = False,
) -> str | None:
    """The eTLD+1 of ``host``, or None when none exists.

    Rejections (None): empty input, IP literals, empty labels, hosts that
    are themselves public suffixes, and (unless ``implicit_star``)
    hostnames whose TLD is not in the list at all.
    """
    if suffixes is None:
        suffixes = default_suffixes()
    stripped = _strip_host(host)
    if stripped is None:
        return None
    labels = tuple(stripped.split("."))
    if any(not _valid_label(lb) for lb in labels):
        return None
    if _is_ipv4(labels):
        return None
    count = _suffix_label_count(labels, suffixes, implicit_star)
    if count is None or count >= len(labels):
        return None
    return ".".join(labels[len(labels) - count - 1 :])
