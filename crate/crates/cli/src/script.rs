//! Line-oriented register scripts: LOAD, PUMP <row>,<col>|ALL,
//! REMOVE <row>,<col>, READOUT repump=on|off, RENDER.
//! Lines starting with `#` and blank lines are skipped.

use crate::error::{config_error, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteRef {
    RowCol(usize, usize),
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptOp {
    Load,
    Pump(SiteRef),
    Remove(usize, usize),
    Readout { repump_on: bool },
    Render,
}

fn parse_row_col(arg: &str, line_no: usize) -> CliResult<(usize, usize)> {
    let err = || config_error(format!("script line {line_no}: expected '<row>,<col>', got '{arg}'"));
    let (row, col) = arg.split_once(',').ok_or_else(err)?;
    let row = row.trim().parse::<usize>().map_err(|_| err())?;
    let col = col.trim().parse::<usize>().map_err(|_| err())?;
    if row == 0 || col == 0 {
        return Err(config_error(format!(
            "script line {line_no}: site indices are 1-based, got '{arg}'"
        )));
    }
    Ok((row, col))
}

pub fn parse_script(text: &str) -> CliResult<Vec<ScriptOp>> {
    let mut ops = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let verb = parts.next().unwrap().to_ascii_uppercase();
        let arg = parts.next();
        if let Some(extra) = parts.next() {
            return Err(config_error(format!(
                "script line {line_no}: unexpected trailing token '{extra}'"
            )));
        }
        let op = match (verb.as_str(), arg) {
            ("LOAD", None) => ScriptOp::Load,
            ("PUMP", Some(arg)) => {
                if arg.eq_ignore_ascii_case("all") {
                    ScriptOp::Pump(SiteRef::All)
                } else {
                    let (row, col) = parse_row_col(arg, line_no)?;
                    ScriptOp::Pump(SiteRef::RowCol(row, col))
                }
            }
            ("REMOVE", Some(arg)) => {
                let (row, col) = parse_row_col(arg, line_no)?;
                ScriptOp::Remove(row, col)
            }
            ("READOUT", Some(arg)) => match arg.to_ascii_lowercase().as_str() {
                "repump=on" => ScriptOp::Readout { repump_on: true },
                "repump=off" => ScriptOp::Readout { repump_on: false },
                _ => {
                    return Err(config_error(format!(
                        "script line {line_no}: READOUT takes repump=on or repump=off, got '{arg}'"
                    )))
                }
            },
            ("RENDER", None) => ScriptOp::Render,
            ("LOAD" | "RENDER", Some(arg)) => {
                return Err(config_error(format!(
                    "script line {line_no}: {verb} takes no argument, got '{arg}'"
                )))
            }
            ("PUMP" | "REMOVE" | "READOUT", None) => {
                return Err(config_error(format!("script line {line_no}: {verb} needs an argument")))
            }
            _ => {
                return Err(config_error(format!("script line {line_no}: unknown verb '{verb}'")));
            }
        };
        ops.push(op);
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_full_vocabulary() {
        let ops = parse_script(
            "# protocol\nLOAD\nPUMP 1,4\nPUMP ALL\nREMOVE 3,6\nREADOUT repump=off\nREADOUT repump=on\nRENDER\n",
        )
        .unwrap();
        assert_eq!(
            ops,
            vec![
                ScriptOp::Load,
                ScriptOp::Pump(SiteRef::RowCol(1, 4)),
                ScriptOp::Pump(SiteRef::All),
                ScriptOp::Remove(3, 6),
                ScriptOp::Readout { repump_on: false },
                ScriptOp::Readout { repump_on: true },
                ScriptOp::Render,
            ]
        );
    }

    #[test]
    fn empty_script_is_valid() {
        assert!(parse_script("\n# nothing here\n\n").unwrap().is_empty());
    }

    #[test]
    fn unknown_verbs_carry_line_numbers() {
        let err = parse_script("LOAD\nFROB 1,2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("FROB"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn malformed_arguments_are_rejected() {
        assert!(parse_script("PUMP onesix").is_err());
        assert!(parse_script("READOUT repump=maybe").is_err());
        assert!(parse_script("REMOVE 0,3").is_err());
        assert!(parse_script("RENDER now").is_err());
    }
}
