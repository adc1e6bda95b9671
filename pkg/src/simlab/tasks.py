"""Evaluation tasks: catalog ingestion, information-need generation, matching.

The concrete task shipped with the platform is conversational movie
recommendation over a tab-separated catalog (columns: item_id, title,
genres, year, actors, keywords, runtime; list-valued cells joined by "|").
Information needs are generated by picking a pivot item and sampling
constraints from its attribute values, which makes every need satisfiable
by construction.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Callable

from .errors import SimlabError
from .protocol import InformationNeed

CATALOG_COLUMNS = ("item_id", "title", "genres", "year", "actors", "keywords", "runtime")

#: Attribute vocabulary of the movie task. "genre", "actors" and "keywords"
#: are list-valued; "year" and "runtime" are integer scalars.
MOVIE_ATTRIBUTES = ("genre", "year", "actors", "keywords", "runtime")
LIST_ATTRIBUTES = frozenset({"genre", "actors", "keywords"})

MIN_YEAR = 1870


class TaskError(SimlabError):
    pass


class FileMissing(TaskError):
    pass


class SchemaMismatch(TaskError):
    """Catalog file violates the column schema; carries per-row errors."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


class DuplicateId(TaskError):
    def __init__(self, item_id: str, rows: list[int]):
        self.item_id = item_id
        self.rows = rows
        super().__init__(f"duplicate item_id {item_id!r} at rows {rows}")


class UnknownAttribute(TaskError):
    pass


class UnknownTask(TaskError):
    pass


@dataclass(frozen=True)
class CatalogItem:
    item_id: str
    title: str
    attributes: dict[str, Any]


class Catalog:
    """Immutable collection of catalog items, shareable across threads."""

    def __init__(self, items: list[CatalogItem]):
        self.items: tuple[CatalogItem, ...] = tuple(items)
        self.by_id: dict[str, CatalogItem] = {item.item_id: item for item in self.items}

    def __len__(self) -> int:
        return len(self.items)

    def value_vocabulary(self, attribute: str) -> set:
        """All values the catalog holds for one attribute."""
        values: set = set()
        for item in self.items:
            value = item.attributes.get(attribute)
            if value is None:
                continue
            if attribute in LIST_ATTRIBUTES:
                values.update(value)
            else:
                values.add(value)
        return values


def _split_list(cell: str) -> list[str]:
    return [part.strip() for part in cell.split("|") if part.strip()]


def load_catalog(path: str | Path) -> Catalog:
    """Parse a tab-separated catalog file.

    Raises FileMissing, SchemaMismatch (every bad row reported, 1-based data
    row numbers) or DuplicateId (listing both offending rows).
    """
    path = Path(path)
    if not path.is_file():
        raise FileMissing(f"catalog file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(["file is empty, expected a header row"]) from None
        if tuple(h.strip() for h in header) != CATALOG_COLUMNS:
            raise SchemaMismatch(
                [f"header {header!r} does not match {list(CATALOG_COLUMNS)}"]
            )
        items: list[CatalogItem] = []
        seen: dict[str, int] = {}
        problems: list[str] = []
        max_year = date.today().year
        for row_no, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(CATALOG_COLUMNS):
                problems.append(f"row {row_no}: expected {len(CATALOG_COLUMNS)} columns, got {len(row)}")
                continue
            item_id, title, genres, year, actors, keywords, runtime = (c.strip() for c in row)
            if not item_id or not title:
                problems.append(f"row {row_no}: item_id and title must be non-empty")
                continue
            try:
                year_value = int(year)
            except ValueError:
                problems.append(f"row {row_no}: year {year!r} is not an integer")
                continue
            if not MIN_YEAR <= year_value <= max_year:
                problems.append(f"row {row_no}: year {year_value} outside [{MIN_YEAR}, {max_year}]")
                continue
            try:
                runtime_value = int(runtime)
            except ValueError:
                problems.append(f"row {row_no}: runtime {runtime!r} is not an integer")
                continue
            if runtime_value <= 0:
                problems.append(f"row {row_no}: runtime must be positive")
                continue
            if item_id in seen:
                raise DuplicateId(item_id, [seen[item_id], row_no])
            seen[item_id] = row_no
            items.append(
                CatalogItem(
                    item_id=item_id,
                    title=title,
                    attributes={
                        "genre": _split_list(genres),
                        "year": year_value,
                        "actors": _split_list(actors),
                        "keywords": _split_list(keywords),
                        "runtime": runtime_value,
                    },
                )
            )
    if problems:
        raise SchemaMismatch(problems)
    return Catalog(items)


def _norm(value: Any) -> str:
    return str(value).strip().lower()


def match_items(need: InformationNeed, catalog: Catalog) -> list[str]:
    """Item ids satisfying every constraint, in catalog order.

    List-valued attributes match when the item's values intersect the
    accepted list; scalar attributes must be a member of it. Comparison is
    case-insensitive on the string form. Adding a constraint can only ever
    shrink the result.
    """
    for attr in list(need.constraints) + list(need.requested):
        if attr not in MOVIE_ATTRIBUTES:
            raise UnknownAttribute(f"unknown attribute {attr!r}")
    matches = []
    for item in catalog.items:
        if all(_satisfies(item, attr, accepted) for attr, accepted in need.constraints.items()):
            matches.append(item.item_id)
    return matches


def _satisfies(item: CatalogItem, attr: str, accepted: list) -> bool:
    accepted_norm = {_norm(v) for v in accepted}
    value = item.attributes.get(attr)
    if value is None:
        return False
    if attr in LIST_ATTRIBUTES:
        return any(_norm(v) in accepted_norm for v in value)
    return _norm(value) in accepted_norm


def generate_needs(catalog: Catalog, n: int, seed: int) -> list[InformationNeed]:
    """Generate ``n`` satisfiable information needs, deterministically.

    Each need pivots on one catalog item: 1-3 constraint attributes are
    sampled from the pivot's populated attributes (values drawn from the
    pivot, so at least the pivot matches), and 1-2 requested attributes come
    from the rest. Identical (catalog, n, seed) yields an identical list.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not len(catalog):
        raise ValueError("catalog is empty")
    rng = random.Random(seed)
    needs = []
    for _ in range(n):
        pivot = catalog.items[rng.randrange(len(catalog))]
        populated = [
            a
            for a in MOVIE_ATTRIBUTES
            if pivot.attributes.get(a) not in (None, [], "")
        ]
        max_constraints = min(3, max(1, len(populated) - 1))
        n_constraints = rng.randint(1, max_constraints)
        constraint_attrs = rng.sample(populated, n_constraints)
        constraints: dict[str, list] = {}
        for attr in constraint_attrs:
            value = pivot.attributes[attr]
            if attr in LIST_ATTRIBUTES:
                k = rng.randint(1, min(2, len(value)))
                constraints[attr] = rng.sample(list(value), k)
            else:
                constraints[attr] = [value]
        remainder = [a for a in populated if a not in constraints]
        if not remainder:
            remainder = [a for a in MOVIE_ATTRIBUTES if a not in constraints]
        n_requested = rng.randint(1, min(2, len(remainder)))
        requested = rng.sample(remainder, n_requested)
        needs.append(InformationNeed(constraints=constraints, requested=requested))
    return needs


NeedGenerator = Callable[[Catalog, int, int], list[InformationNeed]]


@dataclass(frozen=True)
class Task:
    """An evaluation task: metrics to compute plus how to create needs."""

    name: str
    domain: str
    metrics: tuple[str, ...]
    attribute_vocabulary: tuple[str, ...]
    catalog_ref: str
    need_generator: NeedGenerator = field(default=generate_needs, compare=False)

    def generate(self, catalog: Catalog, n: int, seed: int) -> list[InformationNeed]:
        return self.need_generator(catalog, n, seed)


MOVIE_TASK_METRICS = ("success_rate", "fed_understanding", "fed_consistency")


def movie_task(catalog_ref: str, name: str = "movies") -> Task:
    return Task(
        name=name,
        domain="movie recommendation",
        metrics=MOVIE_TASK_METRICS,
        attribute_vocabulary=MOVIE_ATTRIBUTES,
        catalog_ref=catalog_ref,
    )


def task_to_manifest(task: Task) -> dict:
    return {
        "name": task.name,
        "domain": task.domain,
        "metrics": list(task.metrics),
        "catalog": task.catalog_ref,
        "generator": {"kind": "pivot"},
    }


def task_from_manifest(manifest: dict) -> Task:
    metrics = tuple(manifest["metrics"])
    if not metrics:
        raise ValueError("task metrics list must be non-empty")
    return Task(
        name=manifest["name"],
        domain=manifest.get("domain", ""),
        metrics=metrics,
        attribute_vocabulary=tuple(manifest.get("attributes", MOVIE_ATTRIBUTES)),
        catalog_ref=manifest["catalog"],
    )


class TaskRegistry:
    """Resolves task names to (Task, Catalog), caching loaded catalogs."""

    def __init__(self, store):
        self._store = store
        self._catalogs: dict[str, Catalog] = {}

    def get(self, name: str) -> tuple[Task, Catalog]:
        from .storage import NotFound

        try:
            manifest = self._store.get_task_manifest(name)
        except NotFound:
            raise UnknownTask(f"unknown task {name!r}") from None
        task = task_from_manifest(manifest)
        if task.catalog_ref not in self._catalogs:
            catalog_path = self._store.resolve_path(task.catalog_ref)
            self._catalogs[task.catalog_ref] = load_catalog(catalog_path)
        return task, self._catalogs[task.catalog_ref]

    def register(self, task: Task) -> None:
        self._store.put_task_manifest(task_to_manifest(task))

    def names(self) -> list[str]:
        return self._store.list_task_manifests()
