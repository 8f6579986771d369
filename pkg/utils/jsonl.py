import json
from pathlib import Path
from typing import Iterable, Iterator, Tuple, Union

from core.errors import CorpusFormatError


def iter_jsonl(path: Union[str, Path]) -> Iterator[Tuple[int, dict]]:
    """Yield (line number, object) for every non-blank line of a JSON-lines file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No such file: {path}")
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(path, line_no, f"invalid JSON ({e.msg})") from e
            if not isinstance(record, dict):
                raise CorpusFormatError(path, line_no, "expected a JSON object")
            yield line_no, record


def write_jsonl(path: Union[str, Path], records: Iterable[dict]) -> int:
    """Write records as sorted-key JSON lines; returns the number written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
            handle.write("\n")
            count += 1
    return count
