//! Security policy registers: propagation rules and check bits per
//! instruction class, tag width, and the check mask.
//!
//! A policy is a pair of packed 32-bit registers plus two scalars. The
//! propagation register (TPR) holds a 4-bit rule per instruction class; the
//! check register (TCR) holds three check bits per class (src1, src2,
//! dst/address). A check fires when the inspected tag ANDed with the check
//! mask is nonzero.

use serde::{Deserialize, Serialize};

use super::AnnotError;

/// Instruction classes that index the TPR and TCR fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum InstrClass {
    ArithLogic = 0,
    LoadStore = 1,
    Branch = 2,
    FpLoadStore = 3,
}

impl InstrClass {
    pub const ALL: [InstrClass; 4] = [
        InstrClass::ArithLogic,
        InstrClass::LoadStore,
        InstrClass::Branch,
        InstrClass::FpLoadStore,
    ];

    /// Total over the 2-bit field; every encoding names a class.
    pub fn from_encoding(bits: u8) -> Self {
        match bits & 0x3 {
            0 => InstrClass::ArithLogic,
            1 => InstrClass::LoadStore,
            2 => InstrClass::Branch,
            _ => InstrClass::FpLoadStore,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            InstrClass::ArithLogic => "al",
            InstrClass::LoadStore => "ls",
            InstrClass::Branch => "br",
            InstrClass::FpLoadStore => "fp",
        }
    }

    /// Key used in policy text files.
    pub fn key(self) -> &'static str {
        match self {
            InstrClass::ArithLogic => "arith",
            InstrClass::LoadStore => "loadstore",
            InstrClass::Branch => "branch",
            InstrClass::FpLoadStore => "fp",
        }
    }
}

/// How a destination tag is computed from the previous destination tag and
/// up to two source tags. Also the operation set available to the fixed-ALU
/// annotation, so runtime and analysis-time policies can express the same
/// propagation behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum PropagationRule {
    /// Destination tag becomes zero.
    Zero = 0,
    /// Destination tag copies the first source.
    CopySrc1 = 1,
    Or = 2,
    And = 3,
    Xor = 4,
    /// Unsigned maximum of the two source tags.
    Max = 5,
    /// Destination tag is left unchanged.
    KeepDest = 6,
}

impl PropagationRule {
    pub const ALL: [PropagationRule; 7] = [
        PropagationRule::Zero,
        PropagationRule::CopySrc1,
        PropagationRule::Or,
        PropagationRule::And,
        PropagationRule::Xor,
        PropagationRule::Max,
        PropagationRule::KeepDest,
    ];

    pub fn encoding(self) -> u8 {
        self as u8
    }

    pub fn from_encoding(bits: u8) -> Result<Self, AnnotError> {
        match bits {
            0 => Ok(PropagationRule::Zero),
            1 => Ok(PropagationRule::CopySrc1),
            2 => Ok(PropagationRule::Or),
            3 => Ok(PropagationRule::And),
            4 => Ok(PropagationRule::Xor),
            5 => Ok(PropagationRule::Max),
            6 => Ok(PropagationRule::KeepDest),
            _ => Err(AnnotError::InvalidRuleEncoding { bits }),
        }
    }

    /// Applies the rule. `dest_before` is the destination tag prior to the
    /// operation; only `KeepDest` reads it.
    pub fn apply(self, dest_before: u32, src1: u32, src2: u32) -> u32 {
        match self {
            PropagationRule::Zero => 0,
            PropagationRule::CopySrc1 => src1,
            PropagationRule::Or => src1 | src2,
            PropagationRule::And => src1 & src2,
            PropagationRule::Xor => src1 ^ src2,
            PropagationRule::Max => src1.max(src2),
            PropagationRule::KeepDest => dest_before,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PropagationRule::Zero => "zero",
            PropagationRule::CopySrc1 => "copy",
            PropagationRule::Or => "or",
            PropagationRule::And => "and",
            PropagationRule::Xor => "xor",
            PropagationRule::Max => "max",
            PropagationRule::KeepDest => "keep",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        PropagationRule::ALL.into_iter().find(|r| r.name() == name)
    }
}

/// Whether annotations are generated for runtime rule lookup or with
/// operations fixed by the analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyMode {
    Runtime,
    CompileTime,
}

/// Which operands of an annotation the TCR asks to check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckFlags {
    pub src1: bool,
    pub src2: bool,
    pub dst: bool,
}

impl CheckFlags {
    pub const NONE: CheckFlags = CheckFlags { src1: false, src2: false, dst: false };

    fn bits(self) -> u32 {
        u32::from(self.src1) | (u32::from(self.src2) << 1) | (u32::from(self.dst) << 2)
    }

    fn from_bits(bits: u32) -> Self {
        CheckFlags {
            src1: bits & 0b001 != 0,
            src2: bits & 0b010 != 0,
            dst: bits & 0b100 != 0,
        }
    }
}

/// The complete per-policy configuration visible to a tag management core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRegisters {
    pub mode: PolicyMode,
    /// Packed propagation rules, 4 bits per class.
    pub tpr: u32,
    /// Packed check bits, 4 bits per class (bit0 src1, bit1 src2, bit2 dst).
    pub tcr: u32,
    /// Mask ANDed with an inspected tag before the nonzero test.
    pub check_mask: u32,
    /// Significant tag bits, 1..=32.
    pub tag_width: u8,
}

impl Default for PolicyRegisters {
    /// Reset state: propagate nothing, check nothing, full-width tags.
    /// The branch class is the one exception — no branch tag algebra exists
    /// (branches carry no data), so its rule defaults to `KeepDest`.
    fn default() -> Self {
        let mut p = PolicyRegisters {
            mode: PolicyMode::Runtime,
            tpr: 0,
            tcr: 0,
            check_mask: 0xFFFF_FFFF,
            tag_width: 32,
        };
        p.set_tpr_rule(InstrClass::Branch, PropagationRule::KeepDest);
        p
    }
}

impl PolicyRegisters {
    pub fn validate(&self) -> Result<(), AnnotError> {
        if self.tag_width == 0 || self.tag_width > 32 {
            return Err(AnnotError::InvalidTagWidth { width: self.tag_width });
        }
        for class in InstrClass::ALL {
            self.tpr_rule(class)?;
        }
        Ok(())
    }

    /// All-ones mask of `tag_width` bits.
    pub fn width_mask(&self) -> u32 {
        (((1u64 << self.tag_width) - 1) & 0xFFFF_FFFF) as u32
    }

    /// Propagation rule configured for `class`. The zero encoding is the
    /// `Zero` rule, so an all-zero TPR propagates nothing.
    pub fn tpr_rule(&self, class: InstrClass) -> Result<PropagationRule, AnnotError> {
        PropagationRule::from_encoding(((self.tpr >> (4 * class as u32)) & 0xF) as u8)
    }

    pub fn set_tpr_rule(&mut self, class: InstrClass, rule: PropagationRule) {
        let shift = 4 * class as u32;
        self.tpr = (self.tpr & !(0xF << shift)) | (u32::from(rule.encoding()) << shift);
    }

    pub fn tcr_checks(&self, class: InstrClass) -> CheckFlags {
        CheckFlags::from_bits((self.tcr >> (4 * class as u32)) & 0xF)
    }

    pub fn set_tcr_checks(&mut self, class: InstrClass, flags: CheckFlags) {
        let shift = 4 * class as u32;
        self.tcr = (self.tcr & !(0xF << shift)) | (flags.bits() << shift);
    }

    /// Convenience: the same propagation rule for every class.
    pub fn with_uniform_rule(mut self, rule: PropagationRule) -> Self {
        for class in InstrClass::ALL {
            self.set_tpr_rule(class, rule);
        }
        self
    }

    /// Parses the line-oriented policy text format.
    ///
    /// Recognised keys: `mode`, `tag_width`, `check_mask`, `tpr.<class>` and
    /// `tcr.<class>` where `<class>` is one of `arith`, `loadstore`,
    /// `branch`, `fp`. Blank lines and `#` comments are ignored. Absent TPR
    /// and TCR fields keep their reset values (zero, except the branch rule
    /// which keeps destinations); an absent `check_mask` defaults to the
    /// full width mask.
    pub fn parse(text: &str) -> Result<Self, AnnotError> {
        let mut policy = PolicyRegisters {
            check_mask: 0,
            ..PolicyRegisters::default()
        };
        let mut saw_mask = false;
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| AnnotError::PolicyParse {
                line: line_no,
                reason: "expected key=value".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |reason: String| AnnotError::PolicyParse { line: line_no, reason };
            match key {
                "mode" => {
                    policy.mode = match value {
                        "runtime" => PolicyMode::Runtime,
                        "compile" => PolicyMode::CompileTime,
                        _ => return Err(bad(format!("unknown mode '{value}'"))),
                    }
                }
                "tag_width" => {
                    policy.tag_width = value
                        .parse()
                        .map_err(|_| bad(format!("bad tag width '{value}'")))?;
                }
                "check_mask" => {
                    policy.check_mask = parse_u32(value)
                        .ok_or_else(|| bad(format!("bad check mask '{value}'")))?;
                    saw_mask = true;
                }
                _ => {
                    let (kind, class_key) = key
                        .split_once('.')
                        .ok_or_else(|| bad(format!("unknown key '{key}'")))?;
                    let class = InstrClass::ALL
                        .into_iter()
                        .find(|c| c.key() == class_key)
                        .ok_or_else(|| bad(format!("unknown class '{class_key}'")))?;
                    match kind {
                        "tpr" => {
                            let rule = PropagationRule::from_name(value)
                                .ok_or_else(|| bad(format!("unknown rule '{value}'")))?;
                            policy.set_tpr_rule(class, rule);
                        }
                        "tcr" => {
                            let mut flags = CheckFlags::NONE;
                            if value != "none" {
                                for part in value.split(',') {
                                    match part.trim() {
                                        "src1" => flags.src1 = true,
                                        "src2" => flags.src2 = true,
                                        "dst" => flags.dst = true,
                                        other => {
                                            return Err(bad(format!(
                                                "unknown check operand '{other}'"
                                            )))
                                        }
                                    }
                                }
                            }
                            policy.set_tcr_checks(class, flags);
                        }
                        _ => return Err(bad(format!("unknown key '{key}'"))),
                    }
                }
            }
        }
        if !saw_mask {
            policy.check_mask = policy.width_mask();
        }
        policy.validate()?;
        Ok(policy)
    }

    /// Emits the text form; `parse` of the result reproduces the policy.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(match self.mode {
            PolicyMode::Runtime => "mode=runtime\n",
            PolicyMode::CompileTime => "mode=compile\n",
        });
        out.push_str(&format!("tag_width={}\n", self.tag_width));
        out.push_str(&format!("check_mask=0x{:x}\n", self.check_mask));
        for class in InstrClass::ALL {
            let rule = self.tpr_rule(class).expect("validated policy");
            out.push_str(&format!("tpr.{}={}\n", class.key(), rule.name()));
        }
        for class in InstrClass::ALL {
            let flags = self.tcr_checks(class);
            let mut parts = Vec::new();
            if flags.src1 {
                parts.push("src1");
            }
            if flags.src2 {
                parts.push("src2");
            }
            if flags.dst {
                parts.push("dst");
            }
            let value = if parts.is_empty() { "none".to_string() } else { parts.join(",") };
            out.push_str(&format!("tcr.{}={}\n", class.key(), value));
        }
        out
    }
}

fn parse_u32(s: &str) -> Option<u32> {
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16).ok()
    } else {
        s.parse().ok()
    }
}
