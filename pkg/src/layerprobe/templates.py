"""Subject-verb agreement corpus with gold trees known by construction.

One template only: "The <subject> <prep> the [adj] <attractor> <verb>
<adj> <object> ." — a subject NP holding the attractor inside a
prepositional phrase, a transitive verb, and an adjective+noun object.
The PP attaches inside the subject subtree, so every item lands in the
[dobj, nsubj] structure set. The shipped word lists are editable plain
text; no claim is made that they match any particular prior corpus.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import random

from .corpus import DepSentence, to_conllu

SCHEMA_VERSION = 1


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class NounPair:
    singular: str
    plural: str

    def form(self, number: str) -> str:
        return self.singular if number == "sg" else self.plural


@dataclass
class Lexicon:
    subject_nouns: list[NounPair]
    attractor_nouns: list[NounPair]
    verbs: list[NounPair]  # singular/plural verb forms, same structure
    prepositions: list[str]
    attractor_adjectives: list[str]
    object_phrases: list[tuple[str, str]]  # (adjective, plural noun)

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "Lexicon":
        """Load word lists from ``directory`` or the shipped defaults."""

        def read(name: str) -> list[list[str]]:
            if directory is not None:
                text = (Path(directory) / name).read_text(encoding="utf-8")
            else:
                text = resources.files("layerprobe.lexicon").joinpath(name).read_text(encoding="utf-8")
            rows = []
            for line in text.splitlines():
                line = line.strip()
                if line and not line.startswith("#"):
                    rows.append(line.split())
            return rows

        def pairs(name: str) -> list[NounPair]:
            out = []
            for row in read(name):
                if len(row) != 2:
                    raise TemplateError(f"{name}: expected two forms per line, got {row}")
                out.append(NounPair(row[0], row[1]))
            return out

        return cls(
            subject_nouns=pairs("subject_nouns.txt"),
            attractor_nouns=pairs("attractor_nouns.txt"),
            verbs=pairs("verbs.txt"),
            prepositions=[r[0] for r in read("prepositions.txt")],
            attractor_adjectives=[r[0] for r in read("attractor_adjectives.txt")],
            object_phrases=[(r[0], r[1]) for r in read("object_phrases.txt")],
        )


@dataclass
class AgreementItem:
    id: str
    grammatical: str
    ungrammatical: str
    gold: DepSentence  # tree of the grammatical variant
    subject_number: str  # "sg" | "pl"
    attractor_number: str
    pll_grammatical: float | None = None
    pll_ungrammatical: float | None = None


def _build_item(
    item_id: str,
    subject: NounPair,
    subject_number: str,
    prep: str,
    attractor_adj: str | None,
    attractor: NounPair,
    attractor_number: str,
    verb: NounPair,
    obj_adj: str,
    obj_noun: str,
) -> AgreementItem:
    subj_forms = ["The", subject.form(subject_number), prep, "the"]
    if attractor_adj is not None:
        subj_forms.append(attractor_adj)
    subj_forms.append(attractor.form(attractor_number))
    verb_gram = verb.plural if subject_number == "pl" else verb.singular
    verb_ungram = verb.singular if subject_number == "pl" else verb.plural
    forms = subj_forms + [verb_gram, obj_adj, obj_noun, "."]

    n = len(forms)
    verb_pos = len(subj_forms) + 1  # 1-based
    subj_pos = 2
    prep_pos = 3
    attr_pos = len(subj_forms)  # attractor noun is last token of the subject NP
    obj_pos = n - 1

    heads = [0] * n
    rels = [""] * n
    heads[0], rels[0] = subj_pos, "det"
    heads[subj_pos - 1], rels[subj_pos - 1] = verb_pos, "nsubj"
    heads[prep_pos - 1], rels[prep_pos - 1] = subj_pos, "prep"
    heads[3], rels[3] = attr_pos, "det"
    if attractor_adj is not None:
        heads[4], rels[4] = attr_pos, "amod"
    heads[attr_pos - 1], rels[attr_pos - 1] = prep_pos, "pobj"
    heads[verb_pos - 1], rels[verb_pos - 1] = 0, "root"
    heads[verb_pos], rels[verb_pos] = obj_pos, "amod"
    heads[obj_pos - 1], rels[obj_pos - 1] = verb_pos, "dobj"
    heads[n - 1], rels[n - 1] = verb_pos, "punct"

    gold = DepSentence(item_id, tuple(forms), tuple(heads), tuple(rels))
    gold.validate()
    ungram_forms = list(forms)
    ungram_forms[verb_pos - 1] = verb_ungram
    return AgreementItem(
        id=item_id,
        grammatical=" ".join(forms),
        ungrammatical=" ".join(ungram_forms),
        gold=gold,
        subject_number=subject_number,
        attractor_number=attractor_number,
    )


def generate_agreement_pairs(
    n: int,
    seed: int,
    lexicon: Lexicon | None = None,
    attractor_always_mismatched: bool = True,
    attractor_adjective_prob: float = 0.5,
) -> list[AgreementItem]:
    """Generate ``n`` distinct grammatical/ungrammatical pairs.

    The two sentences of a pair differ only in the verb's inflection; the
    attractor's number mismatches the subject's by default. Deterministic
    for a fixed seed.
    """
    lex = lexicon if lexicon is not None else Lexicon.load()
    n_adj_choices = len(lex.attractor_adjectives) + 1 if attractor_adjective_prob > 0 else 1
    space = (
        len(lex.subject_nouns)
        * 2  # subject number
        * len(lex.prepositions)
        * n_adj_choices
        * len(lex.attractor_nouns)
        * (1 if attractor_always_mismatched else 2)
        * len(lex.verbs)
        * len(lex.object_phrases)
    )
    if space < n:
        raise TemplateError(f"lexicon supports only {space} distinct items, need {n}")

    rng = random.Random(seed)
    seen: set[tuple] = set()
    items: list[AgreementItem] = []
    while len(items) < n:
        subject_number = rng.choice(["sg", "pl"])
        if attractor_always_mismatched:
            attractor_number = "pl" if subject_number == "sg" else "sg"
        else:
            attractor_number = rng.choice(["sg", "pl"])
        use_adj = rng.random() < attractor_adjective_prob
        combo = (
            rng.randrange(len(lex.subject_nouns)),
            subject_number,
            rng.randrange(len(lex.prepositions)),
            rng.randrange(len(lex.attractor_adjectives)) if use_adj else None,
            rng.randrange(len(lex.attractor_nouns)),
            attractor_number,
            rng.randrange(len(lex.verbs)),
            rng.randrange(len(lex.object_phrases)),
        )
        if combo in seen:
            continue
        seen.add(combo)
        obj_adj, obj_noun = lex.object_phrases[combo[7]]
        items.append(
            _build_item(
                f"item-{len(items) + 1:04d}",
                lex.subject_nouns[combo[0]],
                subject_number,
                lex.prepositions[combo[2]],
                lex.attractor_adjectives[combo[3]] if combo[3] is not None else None,
                lex.attractor_nouns[combo[4]],
                attractor_number,
                lex.verbs[combo[6]],
                obj_adj,
                obj_noun,
            )
        )
    return items


def write_sentences(items: Sequence[AgreementItem]) -> str:
    """One sentence per line, pair-linked ids."""
    lines = []
    for item in items:
        lines.append(f"{item.id}.gram\t{item.grammatical}")
        lines.append(f"{item.id}.ungram\t{item.ungrammatical}")
    return "\n".join(lines) + "\n"


def write_items_conllu(items: Sequence[AgreementItem]) -> str:
    """Companion treebank: gold trees of the grammatical variants."""
    return "\n".join(to_conllu(item.gold) for item in items)


def items_to_json(items: Sequence[AgreementItem]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "items": [
            {
                "id": it.id,
                "grammatical": it.grammatical,
                "ungrammatical": it.ungrammatical,
                "subject_number": it.subject_number,
                "attractor_number": it.attractor_number,
                "pll_grammatical": it.pll_grammatical,
                "pll_ungrammatical": it.pll_ungrammatical,
            }
            for it in items
        ],
    }


def items_from_json(obj: dict, treebank: Sequence[DepSentence]) -> list[AgreementItem]:
    """Rejoin the items manifest with the companion treebank's gold trees."""
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise TemplateError(f"unsupported items schema {obj.get('schema_version')!r}")
    by_id = {sent.id: sent for sent in treebank}
    items = []
    for rec in obj["items"]:
        if rec["id"] not in by_id:
            raise TemplateError(f"{rec['id']}: no gold tree in companion treebank")
        items.append(
            AgreementItem(
                id=rec["id"],
                grammatical=rec["grammatical"],
                ungrammatical=rec["ungrammatical"],
                gold=by_id[rec["id"]],
                subject_number=rec["subject_number"],
                attractor_number=rec["attractor_number"],
                pll_grammatical=rec["pll_grammatical"],
                pll_ungrammatical=rec["pll_ungrammatical"],
            )
        )
    return items
