import logging
from typing import List

import pandas as pd
from openpyxl.styles import Alignment, Font, PatternFill

from chern_weil.cli.scenario import Outcome

logger = logging.getLogger(__name__)

HEADER_COLOR = "DDEBF7"


def _fit_columns(ws):
    for column in ws.columns:
        max_length = 0
        column_letter = column[0].column_letter
        for cell in column:
            if cell.value is not None and len(str(cell.value)) > max_length:
                max_length = len(str(cell.value))
        ws.column_dimensions[column_letter].width = min((max_length + 2) * 1.2, 120)


def _sheet_name(label: str, used: set) -> str:
    # Excel limits sheet names to 31 characters
    base = label.replace("[", "").replace("]", "").replace(":", "_")[:28]
    name, k = base, 1
    while name in used:
        name = f"{base[:26]}_{k}"
        k += 1
    used.add(name)
    return name


def export_workbook(outcomes: List[Outcome], filename: str):
    """One sheet of form components per computed class and one sheet of integrals."""
    forms = [o for o in outcomes if o.form is not None]
    integrals = []
    used = set()
    with pd.ExcelWriter(filename, engine='openpyxl') as writer:
        for outcome in forms:
            rows = []
            for degree, comps in outcome.form.to_json(outcome.coframe).items():
                if not comps:
                    rows.append({"Degree": int(degree), "Indices": "", "Component": "0"})
                for indices, value in comps.items():
                    rows.append({"Degree": int(degree), "Indices": indices, "Component": value})
            sheet = _sheet_name(outcome.section, used)
            pd.DataFrame(rows, columns=["Degree", "Indices", "Component"]).to_excel(writer, sheet_name=sheet, index=False)
            if outcome.integral is not None:
                integrals.append({
                    "Section": outcome.section,
                    "Form": outcome.form.name,
                    "Value": outcome.integral.value,
                    "Error": outcome.integral.error,
                    "Method": outcome.integral.method,
                    "Nodes": outcome.integral.nodes,
                })
        df_integrals = pd.DataFrame(integrals, columns=["Section", "Form", "Value", "Error", "Method", "Nodes"])
        df_integrals.to_excel(writer, sheet_name='Integrals', index=False)

        workbook = writer.book
        fill = PatternFill(start_color=HEADER_COLOR, end_color=HEADER_COLOR, fill_type="solid")
        for ws in workbook.worksheets:
            _fit_columns(ws)
            for cell in ws[1]:
                cell.font = Font(bold=True)
                cell.fill = fill
            for row in ws.iter_rows(min_row=2):
                for cell in row:
                    cell.alignment = Alignment(horizontal='left', vertical='center')
    logger.info(f"Exported {len(forms)} forms and {len(integrals)} integrals to {filename}")
