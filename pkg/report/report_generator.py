from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

# ============================================================

PASS_COLOR = "#D1FAE5"
FAIL_COLOR = "#FECACA"
ERROR_COLOR = "#FEF3C7"
HEADER_COLOR = "#1E3A5F"


def format_value(value):
    """Scientific notation for ledger values; blank for missing ones."""
    if value is None:
        return ""
    try:
        return f"{float(value):.3e}"
    except (TypeError, ValueError):
        return str(value)


def create_custom_styles():
    """Create and return custom paragraph styles for the report."""
    styles = getSampleStyleSheet()

    title_style = ParagraphStyle(
        "Title",
        parent=styles["Title"],
        fontName="Helvetica-Bold",
        fontSize=20,
        alignment=1,  # center
        textColor=colors.HexColor("#1F2937"),
        spaceAfter=20,
    )

    h2_style = ParagraphStyle(
        "Heading2",
        parent=styles["Heading2"],
        fontSize=14,
        textColor=colors.HexColor("#111827"),
        spaceBefore=20,
        spaceAfter=10,
    )

    body_style = ParagraphStyle(
        "BodyText",
        parent=styles["BodyText"],
        fontSize=10,
        leading=14,
        textColor=colors.HexColor("#374151"),
        spaceAfter=10,
    )

    cell_style = ParagraphStyle(
        "Cell",
        parent=styles["BodyText"],
        fontSize=8,
        leading=10,
    )

    return {
        "title": title_style,
        "heading2": h2_style,
        "body": body_style,
        "cell": cell_style,
    }


def add_title_section(story, title_text, styles):
    story.append(Paragraph(title_text, styles["title"]))


def add_intro_section(story, intro_text, styles):
    story.append(Paragraph(intro_text, styles["body"]))


def create_table_style(status_rows):
    """Header styling plus a pass/fail/error tint per body row."""
    commands = [
        # Header
        ("BACKGROUND", (0, 0), (-1, 0), colors.HexColor(HEADER_COLOR)),
        ("TEXTCOLOR", (0, 0), (-1, 0), colors.white),
        ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
        ("ALIGN", (0, 0), (-1, 0), "CENTER"),

        # Body
        ("FONTNAME", (0, 1), (-1, -1), "Helvetica"),
        ("FONTSIZE", (0, 0), (-1, -1), 8),
        ("VALIGN", (0, 0), (-1, -1), "TOP"),

        # Grid
        ("GRID", (0, 0), (-1, -1), 0.5, colors.HexColor("#9CA3AF")),

        # Padding
        ("LEFTPADDING", (0, 0), (-1, -1), 4),
        ("RIGHTPADDING", (0, 0), (-1, -1), 4),
        ("TOPPADDING", (0, 0), (-1, -1), 4),
        ("BOTTOMPADDING", (0, 0), (-1, -1), 4),
    ]
    tint = {"pass": PASS_COLOR, "fail": FAIL_COLOR, "error": ERROR_COLOR}
    for row, status in enumerate(status_rows, start=1):
        commands.append(("BACKGROUND", (-1, row), (-1, row), colors.HexColor(tint.get(status, "#FFFFFF"))))
    return TableStyle(commands)


def add_table_section(story, ledger_df, table_title, styles, page_width):
    """
    Ledger table for one module: check, reference, value, tolerance, status.
    """
    story.append(Spacer(1, 12))
    story.append(Paragraph(table_title, styles["heading2"]))
    story.append(Spacer(1, 8))

    header = ["Check", "Reference", "Value", "Tolerance", "Status"]
    data = [header]
    statuses = []
    for _, row in ledger_df.iterrows():
        status = "pass" if row["passed"] else "fail"
        statuses.append(status)
        data.append([
            Paragraph(str(row["check"]), styles["cell"]),
            Paragraph(str(row["reference"]), styles["cell"]),
            format_value(row["value"]),
            format_value(row["tolerance"]),
            "✓" if row["passed"] else "✗",
        ])

    col_widths = [page_width * w for w in (0.30, 0.34, 0.13, 0.13, 0.10)]
    table = Table(data, colWidths=col_widths, repeatRows=1)
    table.setStyle(create_table_style(statuses))
    story.append(table)
    story.append(Spacer(1, 8))


def build_verification_report(output_pdf, ledger_df, summary, config_hash, title="Verification Ledger"):
    """
    PDF ledger: a summary paragraph, then one table per module.

    `summary` holds totals (run, passed, failed, errors) and the list of
    modules that raised.
    """
    doc = SimpleDocTemplate(
        output_pdf,
        pagesize=A4,
        rightMargin=0.75 * inch,
        leftMargin=0.75 * inch,
        topMargin=0.75 * inch,
        bottomMargin=0.75 * inch,
    )
    styles = create_custom_styles()
    story = []

    add_title_section(story, title, styles)
    intro = (
        f"Config hash <b>{config_hash[:16]}</b>. "
        f"{summary['checks_passed']} of {summary['checks_run']} checks passed "
        f"across {summary['modules_run']} module(s)."
    )
    if summary.get("errors"):
        intro += f" Modules with errors: {', '.join(summary['errors'])}."
    add_intro_section(story, intro, styles)

    for module, group in ledger_df.groupby("module", sort=True):
        add_table_section(story, group, module, styles, doc.width)

    doc.build(story)
    print(f"Report generated: {output_pdf}")
    return output_pdf
