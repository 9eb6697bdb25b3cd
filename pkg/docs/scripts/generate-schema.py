import pandas as pd

from deskstyle.core.configs import StyleTransferConfig

REPLACE_PATTERNS = {"<!-- CONFIG SCHEMA -->": StyleTransferConfig}


def config_schema(model) -> str:
    """Render a pydantic model's fields (name, type, default, description) as a markdown table"""
    rows = []
    for name, field in model.model_fields.items():
        annotation = getattr(field.annotation, "__name__", str(field.annotation))
        default = "" if field.is_required() else repr(field.get_default(call_default_factory=True))
        description = (field.description or "").replace("\n", " ")
        rows.append(
            {"key": name, "type": annotation, "default": default, "description": description}
        )
    return pd.DataFrame(rows).to_markdown(index=False)


if __name__ == "__main__":
    print(f"Replacing {len(REPLACE_PATTERNS)} items.")
    for replace_pattern, model in REPLACE_PATTERNS.items():
        print(f"Replacing {replace_pattern} with: \n{config_schema(model)}")

else:
    import mkdocs_gen_files

    with mkdocs_gen_files.open("faq.md", "r") as f:
        faq = f.read()

    for pattern, model in REPLACE_PATTERNS.items():
        faq = faq.replace(pattern, config_schema(model))

    with mkdocs_gen_files.open("faq.md", "w") as f:
        f.write(faq)
