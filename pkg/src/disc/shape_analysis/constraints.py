"""Dimension-size and tensor-size equality constraints.

Dimension equality is a union-find over symbols and interned constants; a
class holding a constant is represented by that constant.  Tensor-size
equality compares a canonical key per shape: the product of all known sizes
plus the sorted class representatives of the remaining symbols.  Keys are
recomputed on every query, so unions made after a size link was recorded are
taken into account.  Products of distinct symbols are only equal through an
explicitly recorded link; no factoring is attempted.
"""

from __future__ import annotations

from ..dhlo.ir import Sym
from ..errors import ContradictionError


def _is_const(d) -> bool:
    return not isinstance(d, Sym)


class ConstraintSet:
    def __init__(self):
        self._parent: dict = {}
        self._links: list = []
        self._link_set: set = set()
        self._size_parent: dict | None = None
        self._frozen = False

    # -- construction -------------------------------------------------------
    def copy(self) -> "ConstraintSet":
        cs = ConstraintSet()
        cs._parent = dict(self._parent)
        cs._links = list(self._links)
        cs._link_set = set(self._link_set)
        return cs

    def freeze(self) -> "ConstraintSet":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _check_mutable(self) -> None:
        if self._frozen:
            raise RuntimeError("constraint set is frozen; copy() it before adding constraints")

    def find(self, d):
        """Class representative of ``d`` (a constant when the class holds one)."""
        parent = self._parent
        root = d
        while root in parent:
            root = parent[root]
        while d in parent and parent[d] != root:
            parent[d], d = root, parent[d]
        return root

    def union(self, a, b, where: str = "") -> bool:
        """Record ``a == b``; returns True when the partition changed."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb and type(ra) is type(rb):
            return False
        if _is_const(ra) and _is_const(rb):
            at = f" at %{where}" if where else ""
            raise ContradictionError(f"cannot unify distinct sizes {ra} and {rb}{at}")
        self._check_mutable()
        # constants win; otherwise the smaller symbol id stays the root
        if _is_const(rb) or (not _is_const(ra) and rb.id < ra.id):
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size_parent = None
        return True

    def link_sizes(self, a, b) -> bool:
        """Record that tensors of shapes ``a`` and ``b`` hold the same element count."""
        key = (tuple(a), tuple(b))
        if key in self._link_set or (key[1], key[0]) in self._link_set:
            return False
        self._check_mutable()
        self._link_set.add(key)
        self._links.append(key)
        self._size_parent = None
        return True

    # -- queries ------------------------------------------------------------
    def same(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        return ra == rb and type(ra) is type(rb)

    def const_value(self, d):
        r = self.find(d)
        return r if _is_const(r) else None

    def canonical(self, d):
        return self.find(d)

    def same_dims(self, a, b) -> bool:
        """Positional dimension equality; shapes of different rank are never equal."""
        return len(a) == len(b) and all(self.same(x, y) for x, y in zip(a, b))

    def size_key(self, shape) -> tuple:
        const = 1
        syms = []
        for d in shape:
            r = self.find(d)
            if _is_const(r):
                const *= r
            else:
                syms.append(r.id)
        if const == 0:
            return (0, ())
        return (const, tuple(sorted(syms)))

    def _size_find(self, key):
        if self._size_parent is None:
            parent: dict = {}

            def find(k):
                while k in parent:
                    k = parent[k]
                return k

            for a, b in self._links:
                ka, kb = find(self.size_key(a)), find(self.size_key(b))
                if ka != kb:
                    lo, hi = sorted((ka, kb))
                    parent[hi] = lo
            self._size_parent = parent
        parent = self._size_parent
        while key in parent:
            key = parent[key]
        return key

    def same_size(self, a, b) -> bool:
        ka, kb = self.size_key(a), self.size_key(b)
        return ka == kb or self._size_find(ka) == self._size_find(kb)

    # -- inspection ---------------------------------------------------------
    def classes(self) -> list:
        """Dimension classes with at least two members, members sorted, classes sorted."""
        groups: dict = {}
        for d in list(self._parent):
            groups.setdefault(self.find(d), set()).add(d)
        for root, members in groups.items():
            members.add(root)
        out = [sorted(m, key=_member_order) for m in groups.values()]
        return sorted(out, key=lambda m: _member_order(m[0]))

    def size_classes(self) -> list:
        """Size-key classes joined by recorded links."""
        groups: dict = {}
        for a, b in self._links:
            for s in (a, b):
                k = self.size_key(s)
                groups.setdefault(self._size_find(k), set()).add(k)
        return sorted(sorted(g) for g in groups.values())

    def partition(self) -> tuple:
        return tuple(tuple(c) for c in self.classes()), tuple(tuple(c) for c in self.size_classes())

    def describe(self) -> str:
        lines = []
        for members in self.classes():
            lines.append("dim class: " + " == ".join(_fmt(m) for m in members))
        for keys in self.size_classes():
            lines.append("size class: " + " == ".join(_fmt_key(k) for k in keys))
        return "\n".join(lines) + ("\n" if lines else "")


def _member_order(d):
    return (0, d, 0) if _is_const(d) else (1, 0, d.id)


def _fmt(d) -> str:
    return repr(d) if isinstance(d, Sym) else str(d)


def _fmt_key(key) -> str:
    const, syms = key
    parts = [f"s{s}" for s in syms]
    if const != 1 or not parts:
        parts.insert(0, str(const))
    return "*".join(parts)


def same_dims(cs: ConstraintSet, a, b) -> bool:
    return cs.same_dims(a, b)


def same_size(cs: ConstraintSet, a, b) -> bool:
    return cs.same_size(a, b)
