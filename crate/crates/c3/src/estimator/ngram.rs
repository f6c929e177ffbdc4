//! Character trigram model over printable ASCII.
//!
//! Contexts are the two preceding symbols (start-padded); outcomes are
//! the next character or the end marker. Counts are kept raw and
//! conditionals are additively smoothed on read, so the model
//! serializes exactly and the per-context distributions sum to 1 by
//! construction.

use rand::Rng;

/// Printable ASCII, 0x20..=0x7E.
pub const ALPHABET_LEN: usize = 95;
/// Context symbols: the alphabet plus the start marker.
pub const CONTEXT_SYMBOLS: usize = ALPHABET_LEN + 1;
/// Outcomes: the alphabet plus the end marker.
pub const OUTCOMES: usize = ALPHABET_LEN + 1;
/// Number of (two-symbol) contexts.
pub const CONTEXTS: usize = CONTEXT_SYMBOLS * CONTEXT_SYMBOLS;

const START: usize = ALPHABET_LEN;
const END: usize = ALPHABET_LEN;

/// Hard stop for ancestral sampling; with any positive smoothing the end
/// marker always has positive mass, so this only guards degenerate
/// zero-smoothing loops.
pub const MAX_SAMPLE_LEN: usize = 256;

pub fn char_index(b: u8) -> Option<usize> {
    (0x20..=0x7E).contains(&b).then_some((b - 0x20) as usize)
}

fn index_char(i: usize) -> char {
    char::from(0x20 + i as u8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    smoothing: f64,
    counts: Vec<u64>, // CONTEXTS x OUTCOMES, row-major
    totals: Vec<u64>, // per-context outcome totals
}

/// Context state while walking a string. `None` marks a walk that left
/// the alphabet; such contexts have no counts and fall back to the
/// smoothing floor.
#[derive(Clone, Copy)]
struct Context(Option<(usize, usize)>);

impl Context {
    fn start() -> Self {
        Context(Some((START, START)))
    }

    fn index(self) -> Option<usize> {
        self.0.map(|(a, b)| a * CONTEXT_SYMBOLS + b)
    }

    fn push(self, sym: Option<usize>) -> Self {
        match (self.0, sym) {
            (Some((_, b)), Some(s)) => Context(Some((b, s))),
            _ => Context(None),
        }
    }
}

impl NGramModel {
    /// Train from `(password, multiplicity)` pairs. Strings containing
    /// bytes outside the alphabet are skipped.
    pub fn train<'a, I>(corpus: I, smoothing: f64) -> Option<Self>
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        assert!(smoothing >= 0.0, "smoothing must be nonnegative");
        let mut counts = vec![0u64; CONTEXTS * OUTCOMES];
        let mut totals = vec![0u64; CONTEXTS];
        let mut trained = 0u64;

        'corpus: for (pw, mult) in corpus {
            let mut symbols = Vec::with_capacity(pw.len());
            for b in pw.bytes() {
                match char_index(b) {
                    Some(i) => symbols.push(i),
                    None => continue 'corpus,
                }
            }
            let mut ctx = Context::start();
            for &s in &symbols {
                let c = ctx.index().expect("training context stays in-alphabet");
                counts[c * OUTCOMES + s] += mult;
                totals[c] += mult;
                ctx = ctx.push(Some(s));
            }
            let c = ctx.index().expect("training context stays in-alphabet");
            counts[c * OUTCOMES + END] += mult;
            totals[c] += mult;
            trained += mult;
        }

        if trained == 0 {
            return None;
        }
        Some(NGramModel {
            smoothing,
            counts,
            totals,
        })
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    fn conditional_raw(&self, ctx: Context, count: u64) -> f64 {
        let total = ctx.index().map_or(0, |c| self.totals[c]);
        let denom = total as f64 + self.smoothing * OUTCOMES as f64;
        if denom == 0.0 {
            // Unseen context under zero smoothing: no information at all.
            return 0.0;
        }
        (count as f64 + self.smoothing) / denom
    }

    fn conditional(&self, ctx: Context, outcome: Option<usize>) -> f64 {
        let count = match (ctx.index(), outcome) {
            (Some(c), Some(o)) => self.counts[c * OUTCOMES + o],
            _ => 0, // poisoned context or out-of-alphabet outcome
        };
        self.conditional_raw(ctx, count)
    }

    /// Model probability of a whole string (including termination).
    /// Strictly positive for in-alphabet strings whenever smoothing > 0.
    pub fn prob(&self, password: &str) -> f64 {
        let mut ctx = Context::start();
        let mut p = 1.0;
        for b in password.bytes() {
            let sym = char_index(b);
            p *= self.conditional(ctx, sym);
            if p == 0.0 {
                return 0.0;
            }
            ctx = ctx.push(sym);
        }
        p * self.conditional(ctx, Some(END))
    }

    /// Ancestral sample of one string.
    pub fn sample_one<R: Rng>(&self, rng: &mut R) -> String {
        let mut ctx = Context::start();
        let mut out = String::new();
        while out.len() < MAX_SAMPLE_LEN {
            let mut u: f64 = rng.random();
            let mut chosen = END;
            for o in 0..OUTCOMES {
                let p = self.conditional(ctx, Some(o));
                if u < p {
                    chosen = o;
                    break;
                }
                u -= p;
            }
            if chosen == END {
                break;
            }
            out.push(index_char(chosen));
            ctx = ctx.push(Some(chosen));
        }
        out
    }

    /// Nonzero counts in ascending (context, outcome) order, for
    /// serialization.
    pub(crate) fn nonzero_counts(&self) -> impl Iterator<Item = (u32, u8, u64)> + '_ {
        self.counts.iter().enumerate().filter_map(|(i, &c)| {
            (c > 0).then_some(((i / OUTCOMES) as u32, (i % OUTCOMES) as u8, c))
        })
    }

    pub(crate) fn from_parts(
        smoothing: f64,
        entries: impl IntoIterator<Item = (u32, u8, u64)>,
    ) -> Option<Self> {
        let mut counts = vec![0u64; CONTEXTS * OUTCOMES];
        let mut totals = vec![0u64; CONTEXTS];
        for (ctx, next, count) in entries {
            let (ctx, next) = (ctx as usize, next as usize);
            if ctx >= CONTEXTS || next >= OUTCOMES || count == 0 {
                return None;
            }
            let slot = &mut counts[ctx * OUTCOMES + next];
            if *slot != 0 {
                return None; // duplicate entry
            }
            *slot = count;
            totals[ctx] = totals[ctx].checked_add(count)?;
        }
        Some(NGramModel {
            smoothing,
            counts,
            totals,
        })
    }

    #[cfg(test)]
    fn conditional_by_chars(&self, context: &str, next: Option<char>) -> f64 {
        let mut ctx = Context::start();
        for b in context.bytes() {
            ctx = ctx.push(char_index(b));
        }
        self.conditional(ctx, next.map(|c| char_index(c as u8).unwrap()).or(Some(END)))
    }
}
