"""Versioned prompt-instruction assets.

Instruction blocks live as text files named ``<name>_v<N>.txt`` so prompt
changes are tracked as explicit new versions rather than silent edits.
"""

from importlib import resources


def load_prompt(name: str) -> str:
    return resources.files(__package__).joinpath(name).read_text(encoding="utf-8").strip()
