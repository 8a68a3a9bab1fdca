//! Plain-text rendering of a results table: one row per (principal,
//! training spec, K), one column per test agent, cells as `mean (se)`.

use crate::results::ResultsTable;

fn format_cell(mean: f64, se: f64) -> String {
    format!("{mean:.3} ({se:.3})")
}

/// Render an aligned text grid. Cells a row does not have (rows may cover
/// different column subsets) render as `-`.
pub fn render_table(table: &ResultsTable) -> String {
    let mut columns: Vec<String> = Vec::new();
    for row in &table.rows {
        for cell in &row.cells {
            if !columns.iter().any(|c| *c == cell.test_spec) {
                columns.push(cell.test_spec.clone());
            }
        }
    }
    let mut header = vec!["principal".to_string(), "train".to_string(), "k".to_string()];
    header.extend(columns.iter().cloned());

    let mut grid = vec![header];
    for row in &table.rows {
        let mut line = vec![row.principal.clone(), row.train_spec.clone(), row.k.to_string()];
        for col in &columns {
            let cell = row
                .cells
                .iter()
                .find(|c| &c.test_spec == col)
                .map(|c| format_cell(c.mean, c.se))
                .unwrap_or_else(|| "-".to_string());
            line.push(cell);
        }
        grid.push(line);
    }

    let width = grid[0].len();
    let mut col_width = vec![0usize; width];
    for line in &grid {
        for (i, cell) in line.iter().enumerate() {
            col_width[i] = col_width[i].max(cell.len());
        }
    }

    let mut out = format!("# {}\n", table.experiment);
    for (li, line) in grid.iter().enumerate() {
        let rendered: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{:width$}", cell, width = col_width[i]))
            .collect();
        out.push_str(rendered.join("  ").trim_end());
        out.push('\n');
        if li == 0 {
            let total: usize = col_width.iter().sum::<usize>() + 2 * (width - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::results::{ResultsCell, ResultsRow};

    fn cell(spec: &str, mean: f64) -> ResultsCell {
        ResultsCell { test_spec: spec.to_string(), mean, se: 0.01, n_seeds: 3 }
    }

    #[test]
    fn renders_all_rows_and_columns() {
        let table = ResultsTable {
            experiment: "bandit_table1".to_string(),
            rows: vec![
                ResultsRow {
                    principal: "no_intervention".to_string(),
                    train_spec: "none".to_string(),
                    k: 0,
                    cells: vec![cell("ucb(0.17)", 0.25), cell("eps(0.2)", 0.5)],
                },
                ResultsRow {
                    principal: "mermaide".to_string(),
                    train_spec: "ucb(0.17)".to_string(),
                    k: 1,
                    cells: vec![cell("ucb(0.17)", 0.75)],
                },
            ],
        };
        let text = render_table(&table);
        assert!(text.contains("# bandit_table1"));
        assert!(text.contains("0.750 (0.010)"));
        // Columns align: the eps header sits at the same offset as its
        // cell in the first row and the `-` placeholder in the second.
        let lines: Vec<&str> = text.lines().collect();
        let offset = lines[1].find("eps(0.2)").unwrap();
        assert_eq!(lines[3].find("0.500 (0.010)"), Some(offset));
        assert_eq!(lines[4].find('-'), Some(offset));
    }

    #[test]
    fn empty_table_renders_header_only() {
        let table = ResultsTable::new("empty");
        let text = render_table(&table);
        assert!(text.starts_with("# empty"));
    }
}
