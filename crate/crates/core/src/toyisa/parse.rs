//! Text format for programs: one instruction per line, `;` comments,
//! `label:` definitions, and three directives — `.org 0xADDR` places the
//! image, `.reg rN=VALUE` seeds a scratch register, and `.lib`/`.endlib`
//! bracket library routines (the granularity of the instrumentation ablation
//! switch). `render_program` emits text that parses back to the identical
//! program; branch targets come back as literal addresses.

use std::collections::HashMap;

use super::{
    reg_name, AluOp, FAluOp, Operand2, PlacedInstr, ToyInstr, ToyIsaError, ToyProgram, FP,
    INSTR_WINDOW, LR, PC, SP,
};

const DEFAULT_BASE: u32 = 0x0001_0000;

pub fn parse_program(text: &str) -> Result<ToyProgram, ToyIsaError> {
    let mut base: Option<u32> = None;
    let mut init_regs = std::collections::BTreeMap::new();
    let mut lib = false;
    let mut pending: Vec<(usize, bool, String)> = Vec::new();
    let mut labels: HashMap<String, usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |reason: String| ToyIsaError::Parse { line: line_no, reason };
        let mut line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        // Label definitions may stand alone or prefix an instruction.
        while let Some(colon) = find_label_colon(line) {
            let name = line[..colon].trim();
            if !is_label_name(name) {
                return Err(err(format!("invalid label name '{name}'")));
            }
            if labels.insert(name.to_string(), pending.len()).is_some() {
                return Err(err(format!("duplicate label '{name}'")));
            }
            line = line[colon + 1..].trim();
            if line.is_empty() {
                break;
            }
        }
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('.') {
            let (word, tail) = split_word(rest);
            match word {
                "org" => {
                    if !pending.is_empty() {
                        return Err(err(".org must precede all instructions".into()));
                    }
                    if base.is_some() {
                        return Err(err("duplicate .org".into()));
                    }
                    let v = parse_value(tail.trim())
                        .ok_or_else(|| err(format!("bad .org address '{tail}'")))?;
                    if v < 0 || v > u32::MAX as i64 || v % 4 != 0 {
                        return Err(err("'.org' needs a four-byte-aligned 32-bit address".into()));
                    }
                    base = Some(v as u32);
                }
                "reg" => {
                    let (name, value) = tail
                        .trim()
                        .split_once('=')
                        .ok_or_else(|| err(".reg expects NAME=VALUE".into()))?;
                    let r = parse_int_reg(name.trim())
                        .ok_or_else(|| err(format!("unknown register '{}'", name.trim())))?;
                    if matches!(r, SP | FP | LR | PC | INSTR_WINDOW) {
                        return Err(err(format!(
                            "register {} cannot be seeded; establish it in code",
                            reg_name(r)
                        )));
                    }
                    let v = parse_value(value.trim())
                        .ok_or_else(|| err(format!("bad register value '{}'", value.trim())))?;
                    if v < 0 || v > u32::MAX as i64 {
                        return Err(err("register seeds are 32-bit values".into()));
                    }
                    init_regs.insert(r, v as u32);
                }
                "lib" => {
                    if lib {
                        return Err(err(".lib sections do not nest".into()));
                    }
                    lib = true;
                }
                "endlib" => {
                    if !lib {
                        return Err(err(".endlib without .lib".into()));
                    }
                    lib = false;
                }
                other => return Err(err(format!("unknown directive '.{other}'"))),
            }
            continue;
        }
        pending.push((line_no, lib, line.to_string()));
    }
    if lib {
        return Err(ToyIsaError::Parse {
            line: text.lines().count(),
            reason: "unterminated .lib section".into(),
        });
    }
    if pending.is_empty() {
        return Err(ToyIsaError::Parse { line: 1, reason: "program has no instructions".into() });
    }

    let base = base.unwrap_or(DEFAULT_BASE);
    let resolve = |name: &str, line_no: usize| -> Result<u32, ToyIsaError> {
        if let Some(&idx) = labels.get(name) {
            return Ok(base + (idx as u32) * 4);
        }
        if let Some(v) = parse_value(name) {
            if (0..=u32::MAX as i64).contains(&v) {
                return Ok(v as u32);
            }
        }
        Err(ToyIsaError::Parse { line: line_no, reason: format!("unknown target '{name}'") })
    };

    let mut instrs = Vec::with_capacity(pending.len());
    for (line_no, lib, text) in &pending {
        let instr = parse_instruction(text, *line_no, &resolve)?;
        instrs.push(PlacedInstr { instr, lib: *lib });
    }
    Ok(ToyProgram { base, instrs, init_regs, instrumented_with: None })
}

/// Position of a label-defining colon: the first token ends with `:` and is
/// not a memory operand or operand list.
fn find_label_colon(line: &str) -> Option<usize> {
    let colon = line.find(':')?;
    let head = &line[..colon];
    if head.contains(|c: char| c.is_whitespace() || c == ',' || c == '[') {
        return None;
    }
    Some(colon)
}

fn is_label_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn split_word(s: &str) -> (&str, &str) {
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], &s[i..]),
        None => (s, ""),
    }
}

/// Splits an operand list on commas that are outside `[...]`.
fn split_operands(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '[' => {
                depth += 1;
                cur.push(c);
            }
            ']' => {
                depth = depth.saturating_sub(1);
                cur.push(c);
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn parse_value(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else {
        body.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_int_reg(tok: &str) -> Option<u8> {
    match tok {
        "sp" => Some(SP),
        "fp" => Some(FP),
        "lr" => Some(LR),
        "pc" => Some(PC),
        _ => {
            let n: u8 = tok.strip_prefix('r')?.parse().ok()?;
            (n < 16).then_some(n)
        }
    }
}

fn parse_float_reg(tok: &str) -> Option<u8> {
    let n: u8 = tok.strip_prefix('s')?.parse().ok()?;
    (n < 32).then_some(n)
}

fn parse_imm(tok: &str) -> Option<i32> {
    let v = parse_value(tok.strip_prefix('#')?)?;
    // Accept the full 32-bit range written either signed or unsigned.
    if (-(1i64 << 31)..(1i64 << 32)).contains(&v) {
        Some(v as u32 as i32)
    } else {
        None
    }
}

/// `[base]` or `[base, #offset]`; returns the base token and offset.
fn parse_mem_operand(tok: &str) -> Option<(String, i32)> {
    let inner = tok.strip_prefix('[')?.strip_suffix(']')?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [base] => Some((base.to_string(), 0)),
        [base, off] => Some((base.to_string(), parse_imm(off)?)),
        _ => None,
    }
}

fn parse_instruction<R>(text: &str, line_no: usize, resolve: &R) -> Result<ToyInstr, ToyIsaError>
where
    R: Fn(&str, usize) -> Result<u32, ToyIsaError>,
{
    let err = |reason: String| ToyIsaError::Parse { line: line_no, reason };
    let (mn, rest) = split_word(text);
    let ops = split_operands(rest);
    let argc = |n: usize| -> Result<(), ToyIsaError> {
        if ops.len() == n {
            Ok(())
        } else {
            Err(err(format!("'{mn}' expects {n} operands, got {}", ops.len())))
        }
    };

    // A general-purpose operand register: anything except the reserved
    // window, the link register, and the program counter.
    let gp = |tok: &str| -> Result<u8, ToyIsaError> {
        let r = parse_int_reg(tok)
            .ok_or_else(|| err(format!("expected an integer register, got '{tok}'")))?;
        match r {
            INSTR_WINDOW => Err(err("r9 is reserved for the instrumentation window".into())),
            LR => Err(err("lr is managed by call/ret and cannot be named".into())),
            PC => Err(err("pc is readable only as a memory base".into())),
            _ => Ok(r),
        }
    };
    let fr = |tok: &str| -> Result<u8, ToyIsaError> {
        parse_float_reg(tok).ok_or_else(|| err(format!("expected a float register, got '{tok}'")))
    };
    let imm = |tok: &str| -> Result<i32, ToyIsaError> {
        parse_imm(tok).ok_or_else(|| err(format!("expected '#imm', got '{tok}'")))
    };
    // A memory base: any general register plus pc; never r9 or lr.
    let mem = |tok: &str| -> Result<(u8, i32), ToyIsaError> {
        let (base_tok, offset) =
            parse_mem_operand(tok).ok_or_else(|| err(format!("expected '[base, #off]', got '{tok}'")))?;
        let base = parse_int_reg(&base_tok)
            .ok_or_else(|| err(format!("unknown base register '{base_tok}'")))?;
        if base == LR {
            return Err(err("lr cannot be a memory base".into()));
        }
        Ok((base, offset))
    };

    let instr = match mn {
        "mov" => {
            argc(2)?;
            ToyInstr::MovImm { rd: gp(&ops[0])?, imm: imm(&ops[1])? }
        }
        "add" | "sub" | "and" | "or" | "xor" => {
            argc(3)?;
            let op = match mn {
                "add" => AluOp::Add,
                "sub" => AluOp::Sub,
                "and" => AluOp::And,
                "or" => AluOp::Or,
                _ => AluOp::Xor,
            };
            let op2 = if ops[2].starts_with('#') {
                Operand2::Imm(imm(&ops[2])?)
            } else {
                Operand2::Reg(gp(&ops[2])?)
            };
            ToyInstr::Alu { op, rd: gp(&ops[0])?, rn: gp(&ops[1])?, op2 }
        }
        "ldr" | "str" => {
            argc(2)?;
            let (base, offset) = mem(&ops[1])?;
            if base == INSTR_WINDOW {
                // The reserved window: `str rX, [r9]` is the exporting store.
                if mn != "str" {
                    return Err(err("only 'str' targets the r9 instrumentation window".into()));
                }
                if offset != 0 {
                    return Err(err("the r9 window store takes no offset".into()));
                }
                return Ok(ToyInstr::InstrEmit { addr_reg: gp(&ops[0])? });
            }
            // The moved register may be lr so programs can save and restore
            // return addresses around calls; pc and r9 stay off limits.
            let rt = match parse_int_reg(&ops[0]) {
                Some(LR) => LR,
                _ => gp(&ops[0])?,
            };
            if mn == "ldr" {
                ToyInstr::Ldr { rt, base, offset }
            } else {
                ToyInstr::Str { rt, base, offset }
            }
        }
        "fldr" | "fstr" => {
            argc(2)?;
            let (base, offset) = mem(&ops[1])?;
            if base == INSTR_WINDOW {
                return Err(err("float stores cannot target the r9 window".into()));
            }
            let st = fr(&ops[0])?;
            if mn == "fldr" {
                ToyInstr::FLdr { st, base, offset }
            } else {
                ToyInstr::FStr { st, base, offset }
            }
        }
        "fadd" | "fsub" | "fmul" => {
            argc(3)?;
            let op = match mn {
                "fadd" => FAluOp::FAdd,
                "fsub" => FAluOp::FSub,
                _ => FAluOp::FMul,
            };
            ToyInstr::FAlu { op, sd: fr(&ops[0])?, sn: fr(&ops[1])?, sm: fr(&ops[2])? }
        }
        "b" => {
            argc(1)?;
            ToyInstr::B { target: resolve(&ops[0], line_no)? }
        }
        "bnz" => {
            argc(2)?;
            ToyInstr::Bnz { cond: gp(&ops[0])?, target: resolve(&ops[1], line_no)? }
        }
        "call" => {
            argc(1)?;
            ToyInstr::Call { target: resolve(&ops[0], line_no)? }
        }
        "ret" => {
            argc(0)?;
            ToyInstr::Ret
        }
        "sysread" | "syswrite" => {
            argc(3)?;
            let file_id = parse_value(&ops[0])
                .filter(|v| (0..=u32::MAX as i64).contains(v))
                .ok_or_else(|| err(format!("expected a file id, got '{}'", ops[0])))?
                as u32;
            let (buf, len) = (gp(&ops[1])?, gp(&ops[2])?);
            if mn == "sysread" {
                ToyInstr::SysRead { file_id, buf, len }
            } else {
                ToyInstr::SysWrite { file_id, buf, len }
            }
        }
        other => return Err(err(format!("unknown instruction '{other}'"))),
    };
    Ok(instr)
}

/// Renders a program as text that parses back to the identical program.
/// Branch targets appear as literal addresses and each line carries its
/// address as a trailing comment.
pub fn render_program(p: &ToyProgram) -> String {
    let mut out = String::new();
    out.push_str(&format!(".org 0x{:08x}\n", p.base));
    for (&r, &v) in &p.init_regs {
        out.push_str(&format!(".reg {}=0x{v:08x}\n", reg_name(r)));
    }
    let mut in_lib = false;
    for (i, pi) in p.instrs.iter().enumerate() {
        if pi.lib != in_lib {
            out.push_str(if pi.lib { ".lib\n" } else { ".endlib\n" });
            in_lib = pi.lib;
        }
        out.push_str(&format!("    {:<28}; 0x{:08x}\n", render_instr(&pi.instr), p.addr_of(i)));
    }
    if in_lib {
        out.push_str(".endlib\n");
    }
    out
}

fn render_mem(base: u8, offset: i32) -> String {
    if offset == 0 {
        format!("[{}]", reg_name(base))
    } else {
        format!("[{}, #{offset}]", reg_name(base))
    }
}

pub fn render_instr(i: &ToyInstr) -> String {
    match *i {
        ToyInstr::MovImm { rd, imm } => format!("mov {}, #{imm}", reg_name(rd)),
        ToyInstr::Alu { op, rd, rn, op2 } => {
            let op2 = match op2 {
                Operand2::Reg(r) => reg_name(r),
                Operand2::Imm(v) => format!("#{v}"),
            };
            format!("{} {}, {}, {}", op.mnemonic(), reg_name(rd), reg_name(rn), op2)
        }
        ToyInstr::Ldr { rt, base, offset } => {
            format!("ldr {}, {}", reg_name(rt), render_mem(base, offset))
        }
        ToyInstr::Str { rt, base, offset } => {
            format!("str {}, {}", reg_name(rt), render_mem(base, offset))
        }
        ToyInstr::FLdr { st, base, offset } => format!("fldr s{st}, {}", render_mem(base, offset)),
        ToyInstr::FStr { st, base, offset } => format!("fstr s{st}, {}", render_mem(base, offset)),
        ToyInstr::FAlu { op, sd, sn, sm } => format!("{} s{sd}, s{sn}, s{sm}", op.mnemonic()),
        ToyInstr::B { target } => format!("b 0x{target:08x}"),
        ToyInstr::Bnz { cond, target } => format!("bnz {}, 0x{target:08x}", reg_name(cond)),
        ToyInstr::Call { target } => format!("call 0x{target:08x}"),
        ToyInstr::Ret => "ret".into(),
        ToyInstr::SysRead { file_id, buf, len } => {
            format!("sysread {file_id}, {}, {}", reg_name(buf), reg_name(len))
        }
        ToyInstr::SysWrite { file_id, buf, len } => {
            format!("syswrite {file_id}, {}, {}", reg_name(buf), reg_name(len))
        }
        ToyInstr::InstrEmit { addr_reg } => format!("str {}, [r9]", reg_name(addr_reg)),
    }
}
