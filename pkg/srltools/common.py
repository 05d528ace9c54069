"""
Utility functions and error types shared across the SRL pipeline.
"""

from pathlib import Path


class SrlError(ValueError):
    """Base class for every domain error raised by srltools."""


class MalformedRow(SrlError):

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class AlignmentError(SrlError):
    pass


class CyclicTree(SrlError):
    pass


class IndexOutOfRange(SrlError):
    pass


class LengthMismatch(SrlError):
    pass


class ShapeMismatch(SrlError):
    pass


class NotScalarLoss(SrlError):
    pass


class OddWidth(SrlError):
    pass


class NonFiniteLogits(SrlError):
    pass


class TargetOutOfRange(SrlError):
    pass


class ConfigError(SrlError):
    pass


class VocabMismatch(SrlError):

    def __init__(self, vocab_kind, message):
        self.vocab_kind = vocab_kind
        super().__init__(f"vocab '{vocab_kind}': {message}")


def parse_readme_for_docstrings(readme_path):

    """
    Extract docstrings for CLI commands from the `README.md` file.
    Each command is documented as a "#### `name`" heading, followed by a
    <details> block holding the help text. Returns a dict mapping command
    names to docstrings; an absent README yields an empty dict.
    """

    if not Path(readme_path).is_file():
        return {}

    with open(readme_path, "r", encoding="utf-8") as f:
        readme = f.readlines()

    # Command names sit two lines above each <details> opener:
    keys = [readme[i-2].strip() for i, line in enumerate(readme) if line.startswith("<details><summary>")]
    keys = [key.lstrip("#").strip().strip("`") for key in keys]

    start_lines = []
    end_lines = []
    for i, line in enumerate(readme):

        if line.startswith("<details>"):
            start_lines.append(i+1)

        if line.startswith("</details>"):
            end_lines.append(i)

    docstrings = ["".join(readme[start_line:end_line]).strip()
                  for start_line, end_line in zip(start_lines, end_lines)]

    return dict(zip(keys, docstrings))


def docstring_parameter(*sub):

    """
    Modify the __doc__ object so I can pass in variables
    to the docstring
    """

    def dec(obj):
        obj.__doc__ = obj.__doc__.format(*sub)
        return obj
    return dec
