//! SDPA sparse format (`.dat-s`).
//!
//! The file poses `min c'x  s.t.  X = sum_k F_k x_k - F_0 >= 0` with one SDPA
//! variable per moment, in layout order: variable `k` (1-based) is moment
//! `k - 1` of the flat moment vector, and a comment line per variable names
//! its measure and exponents. Blocks appear in instance order. When the
//! instance has equality rows they form a final diagonal block holding the
//! pair `a'y - b >= 0`, `b - a'y >= 0` for each row, in row order. A constant
//! cost offset is recorded in a comment only.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::relaxation::SDPInstance;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdpaEntry {
    /// 0 for `F_0`, `k` for variable `k`.
    pub matrix: usize,
    /// 1-based block number.
    pub block: usize,
    /// 1-based, `i <= j`.
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SdpaProblem {
    pub comments: Vec<String>,
    pub nvars: usize,
    /// Block sizes; negative for diagonal blocks.
    pub block_struct: Vec<i64>,
    pub c: Vec<f64>,
    /// Sorted by `(matrix, block, i, j)` without duplicates.
    pub entries: Vec<SdpaEntry>,
}

fn push(acc: &mut Vec<SdpaEntry>, matrix: usize, block: usize, i: usize, j: usize, value: f64) {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    acc.push(SdpaEntry {
        matrix,
        block,
        i,
        j,
        value,
    });
}

fn canonical(mut entries: Vec<SdpaEntry>) -> Vec<SdpaEntry> {
    entries.sort_by(|a, b| (a.matrix, a.block, a.i, a.j).cmp(&(b.matrix, b.block, b.i, b.j)));
    let mut out: Vec<SdpaEntry> = Vec::with_capacity(entries.len());
    for e in entries {
        match out.last_mut() {
            Some(last) if (last.matrix, last.block, last.i, last.j) == (e.matrix, e.block, e.i, e.j) => {
                last.value += e.value
            }
            _ => out.push(e),
        }
    }
    out.retain(|e| e.value != 0.0);
    out
}

/// SDPA form of an instance.
pub fn to_sdpa(inst: &SDPInstance) -> SdpaProblem {
    let n = inst.nvars();
    let mut comments = vec![
        "moment relaxation exported by switched-sos".to_string(),
        format!("cost offset {:e}", inst.cost_offset),
    ];
    for meas in &inst.layout.measures {
        for (i, k) in meas.monomials.iter().enumerate() {
            comments.push(format!(
                "x{} = {} moment {:?}",
                meas.offset + i + 1,
                meas.role.label(),
                k.exponents()
            ));
        }
    }
    let mut c = vec![0.0; n];
    for &(k, v) in &inst.cost {
        c[k] += v;
    }
    let mut block_struct = Vec::new();
    let mut entries = Vec::new();
    for (bi, b) in inst.blocks.iter().enumerate() {
        block_struct.push(b.form.size as i64);
        for &(r, col, v) in &b.form.constant {
            push(&mut entries, 0, bi + 1, r + 1, col + 1, -v);
        }
        for t in &b.form.terms {
            push(&mut entries, t.var + 1, bi + 1, t.row + 1, t.col + 1, t.coeff);
        }
    }
    if !inst.equalities.is_empty() {
        let blk = inst.blocks.len() + 1;
        block_struct.push(-2 * inst.equalities.len() as i64);
        for (r, row) in inst.equalities.iter().enumerate() {
            let (p, q) = (2 * r + 1, 2 * r + 2);
            push(&mut entries, 0, blk, p, p, row.rhs);
            push(&mut entries, 0, blk, q, q, -row.rhs);
            for &(k, a) in &row.entries {
                push(&mut entries, k + 1, blk, p, p, a);
                push(&mut entries, k + 1, blk, q, q, -a);
            }
        }
    }
    SdpaProblem {
        comments,
        nvars: n,
        block_struct,
        c,
        entries: canonical(entries),
    }
}

pub fn write_sdpa(p: &SdpaProblem, mut w: impl Write) -> std::io::Result<()> {
    let mut s = String::new();
    for line in &p.comments {
        let _ = writeln!(s, "* {line}");
    }
    let _ = writeln!(s, "{}", p.nvars);
    let _ = writeln!(s, "{}", p.block_struct.len());
    let sizes: Vec<String> = p.block_struct.iter().map(|b| b.to_string()).collect();
    let _ = writeln!(s, "{}", sizes.join(" "));
    let cs: Vec<String> = p.c.iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(s, "{}", cs.join(" "));
    for e in &p.entries {
        let _ = writeln!(s, "{} {} {} {} {:e}", e.matrix, e.block, e.i, e.j, e.value);
    }
    w.write_all(s.as_bytes())
}

/// Writes the SDPA form of `inst` to `path`.
pub fn export_sdpa(inst: &SDPInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        context: format!("creating {}", path.display()),
        source,
    })?;
    write_sdpa(&to_sdpa(inst), std::io::BufWriter::new(file)).map_err(|source| Error::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("SDPA line {line}: {msg}"))
}

fn numbers(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || ",(){}".contains(c))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Reads an SDPA sparse file and checks it against the format's grammar:
/// counts, block sizes, index ranges, upper-triangle entries and diagonal
/// entries in diagonal blocks.
pub fn read_sdpa(r: impl BufRead) -> Result<SdpaProblem> {
    let mut comments = Vec::new();
    let mut header: Vec<(usize, String)> = Vec::new();
    let mut entries = Vec::new();
    let mut lines = r.lines().enumerate();
    let mut in_header = true;
    for (no, line) in lines.by_ref() {
        let line = line.map_err(|source| Error::Io {
            context: "reading SDPA data".into(),
            source,
        })?;
        let no = no + 1;
        let trimmed = line.trim();
        if in_header && header.is_empty() && (trimmed.starts_with('*') || trimmed.starts_with('"')) {
            comments.push(trimmed[1..].trim().to_string());
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        if in_header {
            header.push((no, trimmed.to_string()));
            if header.len() == 4 {
                in_header = false;
            }
            continue;
        }
        entries.push((no, trimmed.to_string()));
    }
    if header.len() < 4 {
        return Err(Error::Format("SDPA data ends before the header is complete".into()));
    }
    let parse_usize = |(no, s): &(usize, String)| -> Result<usize> {
        numbers(s)
            .first()
            .ok_or_else(|| bad(*no, "missing count"))?
            .parse()
            .map_err(|e| bad(*no, e))
    };
    let nvars = parse_usize(&header[0])?;
    let nblocks = parse_usize(&header[1])?;
    let block_struct: Vec<i64> = numbers(&header[2].1)
        .iter()
        .map(|s| s.parse::<i64>().map_err(|e| bad(header[2].0, e)))
        .collect::<Result<_>>()?;
    if block_struct.len() != nblocks || block_struct.iter().any(|&b| b == 0) {
        return Err(bad(header[2].0, format!("expected {nblocks} nonzero block sizes")));
    }
    let c: Vec<f64> = numbers(&header[3].1)
        .iter()
        .map(|s| s.parse::<f64>().map_err(|e| bad(header[3].0, e)))
        .collect::<Result<_>>()?;
    if c.len() != nvars {
        return Err(bad(header[3].0, format!("expected {nvars} cost entries, found {}", c.len())));
    }
    let mut parsed = Vec::with_capacity(entries.len());
    for (no, line) in &entries {
        let f = numbers(line);
        if f.len() != 5 {
            return Err(bad(*no, "expected 'matno blkno i j value'"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(*no, e));
        let (matrix, block, i, j) = (int(f[0])?, int(f[1])?, int(f[2])?, int(f[3])?);
        let value: f64 = f[4].parse().map_err(|e| bad(*no, e))?;
        if matrix > nvars {
            return Err(bad(*no, format!("matrix number {matrix} exceeds {nvars}")));
        }
        if block == 0 || block > nblocks {
            return Err(bad(*no, format!("block number {block} out of range")));
        }
        let size = block_struct[block - 1].unsigned_abs() as usize;
        if i == 0 || j == 0 || i > size || j > size || i > j {
            return Err(bad(*no, format!("entry ({i}, {j}) invalid for block size {size}")));
        }
        if block_struct[block - 1] < 0 && i != j {
            return Err(bad(*no, "off-diagonal entry in a diagonal block"));
        }
        parsed.push(SdpaEntry {
            matrix,
            block,
            i,
            j,
            value,
        });
    }
    Ok(SdpaProblem {
        comments,
        nvars,
        block_struct,
        c,
        entries: canonical(parsed),
    })
}
