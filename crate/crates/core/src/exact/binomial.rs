use num_bigint::BigUint;
use num_traits::{One, Zero};

/// Below this `min(k, n-k)` the multiplicative loop beats factorization.
const MULTIPLICATIVE_LIMIT: u64 = 96;

/// Exact binomial coefficient `C(n, k)`; zero when `k > n`.
///
/// Small coefficients use the multiplicative recurrence, large ones are
/// assembled from their prime factorization (Legendre's formula) with a
/// balanced product tree, which keeps `C(10^6, 5·10^5)` in the tens of
/// milliseconds.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    if k <= MULTIPLICATIVE_LIMIT {
        binomial_multiplicative(n, k)
    } else {
        binomial_factored(n, k)
    }
}

/// `C(n, k)` via `C(n, i+1) = C(n, i) (n-i) / (i+1)`.
pub fn binomial_multiplicative(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut c = BigUint::one();
    for i in 0..k {
        c *= n - i;
        c /= i + 1;
    }
    c
}

fn binomial_factored(n: u64, k: u64) -> BigUint {
    let primes = primes_up_to(n);
    let mut factors: Vec<u64> = Vec::new();
    // pack prime powers into words before going big
    let mut word: u64 = 1;
    for &p in &primes {
        let e = legendre(n, p) - legendre(k, p) - legendre(n - k, p);
        for _ in 0..e {
            match word.checked_mul(p) {
                Some(w) => word = w,
                None => {
                    factors.push(word);
                    word = p;
                }
            }
        }
    }
    factors.push(word);
    product_tree(&factors)
}

/// Exponent of `p` in `m!`.
fn legendre(m: u64, p: u64) -> u64 {
    let mut e = 0;
    let mut q = m;
    while q > 0 {
        q /= p;
        e += q;
    }
    e
}

fn product_tree(words: &[u64]) -> BigUint {
    match words.len() {
        0 => BigUint::one(),
        1 => BigUint::from(words[0]),
        len => {
            let (a, b) = words.split_at(len / 2);
            product_tree(a) * product_tree(b)
        }
    }
}

fn primes_up_to(n: u64) -> Vec<u64> {
    let n = n as usize;
    if n < 2 {
        return Vec::new();
    }
    let mut composite = vec![false; n + 1];
    let mut primes = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            primes.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    primes
}
