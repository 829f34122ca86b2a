//! Fixed-point kernels for certified `log2` and `exp2`.
//!
//! Every routine takes a rounding direction and returns a one-sided bound;
//! callers run the pair to get an enclosure.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::dyadic::{BigDyadic, Round};

fn shr_dir(x: &BigInt, s: u64, dir: Round) -> BigInt {
    match dir {
        Round::Down => x >> s,
        Round::Up => -((-x) >> s),
    }
}

fn shift_signed(x: &BigInt, by: i64, dir: Round) -> BigInt {
    if by >= 0 {
        x << by as u64
    } else {
        shr_dir(x, (-by) as u64, dir)
    }
}

fn is_pow2(z: &BigInt) -> bool {
    z.is_positive() && z.trailing_zeros() == Some(z.bits() - 1)
}

/// One-sided bound on `log2(z / 2^frac_bits)` for `z > 0`, with `n_bits`
/// fractional bits of accuracy.
pub fn log2_fixed(z: &BigInt, frac_bits: u64, n_bits: u64, dir: Round) -> BigDyadic {
    assert!(z.is_positive(), "log2 of a non-positive number");
    let lead = z.bits() - 1;
    let k = BigInt::from(lead) - BigInt::from(frac_bits);
    if is_pow2(z) {
        return BigDyadic::from_int(k);
    }
    let w = n_bits + 64;
    let mut x = shift_signed(z, w as i64 - lead as i64, dir);
    let two = BigInt::one() << (w + 1);
    let mut acc = BigInt::zero();
    for _ in 0..n_bits {
        x = shr_dir(&(&x * &x), w, dir);
        acc <<= 1;
        if x >= two {
            acc += 1;
            x = shr_dir(&x, 1, dir);
        }
    }
    if dir == Round::Up {
        acc += 1;
    }
    BigDyadic::from_int(k).add(&BigDyadic::new(acc, -BigInt::from(n_bits)))
}

/// One-sided bound on `log2` of a positive dyadic.
pub fn log2_dyadic(d: &BigDyadic, n_bits: u64, dir: Round) -> BigDyadic {
    assert!(d.is_positive(), "log2 of a non-positive dyadic");
    let frac = log2_fixed(d.mantissa(), 0, n_bits, dir);
    frac.add_round(&BigDyadic::from_int(d.exponent().clone()), n_bits + 64, dir)
}

type RootTable = Rc<(Vec<BigInt>, Vec<BigInt>)>;

thread_local! {
    static ROOTS: RefCell<HashMap<u64, RootTable>> = RefCell::new(HashMap::new());
}

fn ceil_sqrt(n: &BigInt) -> BigInt {
    let s = n.sqrt();
    if &(&s * &s) < n {
        s + 1
    } else {
        s
    }
}

/// Lower and upper fixed-point values of `2^(2^-i)` with `w` fractional
/// bits, for `i = 0..=w`.
fn roots(w: u64) -> RootTable {
    ROOTS.with(|cell| {
        if let Some(t) = cell.borrow().get(&w) {
            return t.clone();
        }
        let mut lo = Vec::with_capacity(w as usize + 1);
        let mut hi = Vec::with_capacity(w as usize + 1);
        let two = BigInt::from(2) << w;
        lo.push(two.clone());
        hi.push(two);
        for i in 1..=w as usize {
            lo.push((&lo[i - 1] << w).sqrt());
            hi.push(ceil_sqrt(&(&hi[i - 1] << w)));
        }
        let table = Rc::new((lo, hi));
        cell.borrow_mut().insert(w, table.clone());
        table
    })
}

/// One-sided bound on `2^f * 2^w` for a dyadic `f` in `[0, 1]`.
pub fn exp2_unit(f: &BigDyadic, w: u64, dir: Round) -> BigInt {
    assert!(
        !f.is_negative() && f <= &BigDyadic::one(),
        "exp2_unit expects an argument in [0, 1]"
    );
    let wi = w + 40;
    let scaled = f.shl(&BigInt::from(wi));
    let fbits = match dir {
        Round::Down => scaled.floor(),
        Round::Up => scaled.ceil(),
    }
    .expect("bounded argument");
    let one = BigInt::one() << wi;
    if fbits >= one {
        return BigInt::from(2) << w;
    }
    let table = roots(wi);
    let (lo, hi) = (&table.0, &table.1);
    let mut p = one;
    for j in 1..=wi {
        if fbits.bit(wi - j) {
            let r = if dir == Round::Down {
                &lo[j as usize]
            } else {
                &hi[j as usize]
            };
            p = shr_dir(&(&p * r), wi, dir);
        }
    }
    shr_dir(&p, 40, dir)
}

/// One-sided bound on `2^-d * 2^w` for a dyadic `d >= 0` of moderate size.
pub fn exp2_neg(d: &BigDyadic, w: u64, dir: Round) -> BigInt {
    assert!(!d.is_negative());
    let i = d.floor().expect("moderate exponent");
    let f = d.sub(&BigDyadic::from_int(i.clone()));
    // 2^-d = 2^-(i+1) * 2^(1-f), with 1-f in (0, 1]
    let g = BigDyadic::one().sub(&f);
    let x = exp2_unit(&g, w, dir);
    let s: u64 = (i + 1u32).try_into().expect("moderate exponent");
    shr_dir(&x, s, dir)
}

/// One-sided bound on `2^d` for a dyadic `d` whose integer part fits in an
/// `i64`, as a dyadic with about `prec` significant bits.
pub fn exp2_dyadic(d: &BigDyadic, prec: u64, dir: Round) -> BigDyadic {
    let i = d.floor().expect("moderate exponent");
    let f = d.sub(&BigDyadic::from_int(i.clone()));
    let w = prec + 8;
    let x = exp2_unit(&f, w, dir);
    BigDyadic::new(x, i - BigInt::from(w))
}

/// One-sided bound on `log2(1 + 2^-d)` for `d >= 0`.
pub fn log2_one_plus(d: &BigDyadic, prec: u64, dir: Round) -> BigDyadic {
    assert!(!d.is_negative());
    if d > &BigDyadic::from_int(BigInt::from(prec + 2)) {
        return match dir {
            Round::Down => BigDyadic::zero(),
            Round::Up => BigDyadic::pow2(-BigInt::from(prec + 1)),
        };
    }
    let w = prec + 64;
    let y = exp2_neg(d, w, dir);
    let z = (BigInt::one() << w) + y;
    log2_fixed(&z, w, prec + 16, dir)
}

/// One-sided bound on `log2(1 - 2^-d)` for `d > 0`. `None` when the lower
/// bound cannot be separated from minus infinity at this precision.
pub fn log2_one_minus(d: &BigDyadic, prec: u64, dir: Round) -> Option<BigDyadic> {
    assert!(d.is_positive());
    if d > &BigDyadic::from_int(BigInt::from(prec + 2)) {
        return Some(match dir {
            Round::Down => BigDyadic::pow2(-BigInt::from(prec + 1)).neg(),
            Round::Up => BigDyadic::zero(),
        });
    }
    let w = prec + 64;
    let y = exp2_neg(d, w, dir.flip());
    let z = (BigInt::one() << w) - y;
    if !z.is_positive() {
        return None;
    }
    Some(log2_fixed(&z, w, prec + 16, dir))
}
