pub mod bench;
pub mod counterexample;
pub mod eval;
pub mod gen;
pub mod train;

use crate::settings::invalid;

/// `(key, value)` pairs for [`crate::settings::Settings::resolve`].
macro_rules! flags {
    ($args:expr; $($field:ident => $key:literal),* $(,)?) => {
        vec![$(($key, $args.$field)),*]
    };
}
pub(crate) use flags;

/// Library validation failures found before any work are usage errors.
pub(crate) fn checked(r: gineplus::Result<()>) -> anyhow::Result<()> {
    r.map_err(|e| invalid(e.to_string()))
}
