//! Closed-form reference values shared by the unit tests. Everything here is
//! derived independently of the code under test (Newton iterations and
//! antiderivatives, not library calls).

/// Root of t + ln t = 0 by Newton iteration, the cut point of the symmetric
/// uniform first-price instance.
pub fn omega() -> f64 {
    let mut t = 0.5_f64;
    for _ in 0..60 {
        t = t * (1.0 - t.ln()) / (t + 1.0);
    }
    t
}

/// Leader utility of the two-piece commitment with cut `t0` in the symmetric
/// uniform first-price instance, via the antiderivative of x - 1 + t0/x.
pub fn fp_uniform_utility(t0: f64) -> f64 {
    let anti = |x: f64| 0.5 * x * x - x + t0 * x.ln();
    anti(1.0) - anti(t0)
}

/// Three-piece follower utility of the worked first-price example with
/// leader strategy x/4 below 0.4 and x - 0.3 above, both types uniform [0,1].
pub fn eg1_follower_utility(y: f64) -> f64 {
    if y < 0.2 {
        y * y
    } else if y <= 0.5 {
        0.4 * y - 0.04
    } else {
        (y + 0.3) * (y + 0.3) / 4.0
    }
}

/// The smoothed version of the same strategy.
pub fn eg1_smoothed(x: f64) -> f64 {
    if x < 0.4 {
        x / 4.0
    } else if x <= 0.65 {
        x - 0.3
    } else {
        1.0 - 0.4225 / x
    }
}

/// Equal-bid function of the smoothed strategy (left-continuous; jumps at 0.4).
pub fn eg1_equal_bid(x: f64) -> f64 {
    if x <= 0.4 {
        x / 2.0
    } else if x <= 0.65 {
        2.0 * x - 0.3
    } else {
        1.0
    }
}

/// The raw strategy of the worked example.
pub fn eg1_strategy(x: f64) -> f64 {
    if x <= 0.4 {
        x / 4.0
    } else {
        x - 0.3
    }
}

/// Expected commitment value of bidding x^2/2 in the symmetric uniform
/// first-price instance: 1/6 + 2*sqrt(2/3)/45 by the antiderivative split at
/// sqrt(2/3).
pub fn example1_commitment_value() -> f64 {
    1.0 / 6.0 + 2.0 * (2.0_f64 / 3.0).sqrt() / 45.0
}
