from pygments import highlight
from pygments.formatters import Terminal256Formatter
from pygments.lexers import JsonLexer


def format_cell(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return " ".join(format_cell(i) for i in value)
    if value is None:
        return "-"
    return str(value)


def create_table(data_header: list, data_content) -> str:
    """creates markdown tables, cells formatted for the terminal"""
    data_content = [[format_cell(i) for i in row] for row in data_content]
    transposed_data = list(zip(data_header, *data_content))
    column_size = [len(max(i, key=len)) for i in transposed_data]
    separator = ["-" * i for i in column_size]
    data = [data_header, separator, *data_content]
    result = ""
    for row in data:
        result += (
            "".join([f"| {row[i]: <{column_size[i]}} " for i in range(len(row))])
            + "|\n"
        )
    return result


def highlight_json(text: str) -> str:
    return highlight(text, JsonLexer(), Terminal256Formatter())
