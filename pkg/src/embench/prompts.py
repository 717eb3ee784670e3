"""Per-task evaluation prompts and query-side instruction application."""

from __future__ import annotations

import re

from .errors import MissingLanguage
from .types import DatasetManifest, TaskKind

EVAL_PROMPTS = {
    TaskKind.RERANKING: (
        "Given an Arabic search query, retrieve web passages that answer the question in {Lang}. Query:{query}."
    ),
    TaskKind.BITEXT_MINING: "Retrieve parallel sentences in {Lang}.",
    TaskKind.RETRIEVAL: (
        "Given an Arabic search query, retrieve web passages that answer the question. Query:{query}."
    ),
    TaskKind.CROSSLINGUAL_RETRIEVAL: (
        "Given an Arabic search query, retrieve web passages that answer the question in {Lang}. Query:{query}."
    ),
    TaskKind.STS: "Retrieve semantically similar text. Text: {text}.",
    TaskKind.PAIR_CLASSIFICATION: "Retrieve texts that are semantically similar to the given text. Text: {text}.",
    TaskKind.CLUSTERING: "Identify the topic or theme of the given news article. Article:{article}.",
    TaskKind.CLASSIFICATION: "Classify the text into the given categories {options}.",
}

# Placeholders that mark where the input text goes.
TEXT_SLOTS = ("{query}", "{text}", "{article}")

_SLOT_RE = re.compile("|".join(re.escape(s) for s in TEXT_SLOTS))


def default_instruction(task: TaskKind, target_language: str | None = None) -> str:
    template = EVAL_PROMPTS[TaskKind.parse(task)]
    if "{Lang}" in template:
        if not target_language:
            raise MissingLanguage(f"the {TaskKind.parse(task).value} prompt needs a target language")
        template = template.replace("{Lang}", target_language)
    return template


def fill_options(instruction: str, labels) -> str:
    """Substitute the classification label set into an ``{options}`` slot."""
    return instruction.replace("{options}", ", ".join(labels))


def apply_instruction(instruction: str | None, text: str) -> str:
    """Return the text actually sent to the embedding backend.

    The last text slot in the template receives ``text``.  Templates without
    a slot are used as a task description in front of the query.
    """
    if not instruction:
        return text
    matches = list(_SLOT_RE.finditer(instruction))
    if not matches:
        return f"Instruction: {instruction} Query: {text}"
    last = matches[-1]
    return instruction[: last.start()] + text + instruction[last.end():]


def resolve_instruction(manifest: DatasetManifest, overrides: dict[str, str] | None = None) -> str:
    """Dataset override, then task override, then the manifest, then the task default."""
    overrides = overrides or {}
    task = manifest.task
    for key in (manifest.id, task.value, task.abbrev):
        if key in overrides:
            template = overrides[key]
            break
    else:
        template = manifest.instruction
    # the reranking prompt names a language although reranking is monolingual
    lang = manifest.target_language or manifest.language
    if template is None:
        return default_instruction(task, lang)
    return template.replace("{Lang}", lang) if lang else template
