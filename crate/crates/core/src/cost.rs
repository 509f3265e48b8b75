//! Gas schedule and Ether/USD cost arithmetic.
//!
//! Gas is a flat per-function constant. Ether and USD are exact decimals;
//! rounding only happens in the `format_*` helpers.

use alloc::collections::BTreeMap;
use alloc::string::String;
use core::str::FromStr;

use rust_decimal::prelude::*;
use rust_decimal::RoundingStrategy;

use crate::contract::{Function, TxFunction, UnknownFunction};
use crate::crypto::Address;
use crate::ledger::Chain;

/// 3 gwei, expressed in Ether per gas.
pub const DEFAULT_GAS_PRICE: &str = "0.000000003";
/// USD per Ether.
pub const DEFAULT_ETHER_PRICE: &str = "219.01";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error(transparent)]
    UnknownFunction(#[from] UnknownFunction),
    #[error("{0} must be positive")]
    NonPositivePrice(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GasSchedule {
    entries: BTreeMap<TxFunction, u64>,
}

impl Default for GasSchedule {
    fn default() -> Self {
        Self::default_schedule()
    }
}

impl GasSchedule {
    pub fn default_schedule() -> Self {
        let entries = [
            (TxFunction::AddManager, 66_632),
            (TxFunction::DeleteManager, 17_677),
            (TxFunction::AddUserAccount, 94_562),
            (TxFunction::DeleteUserAccount, 65_020),
            (TxFunction::AddAttribute, 182_045),
            (TxFunction::DeleteAttribute, 33_017),
            (TxFunction::PermitAttributeManager, 45_151),
            (TxFunction::DenyAttributeManager, 15_283),
        ]
        .into_iter()
        .collect();
        GasSchedule { entries }
    }

    /// Builds a schedule from explicit values; every transaction function must be present.
    pub fn from_entries(entries: impl IntoIterator<Item = (TxFunction, u64)>) -> Option<Self> {
        let entries: BTreeMap<_, _> = entries.into_iter().collect();
        TxFunction::ALL.iter().all(|f| entries.contains_key(f)).then_some(GasSchedule { entries })
    }

    pub fn transaction_gas(&self, function: TxFunction) -> u64 {
        self.entries[&function]
    }

    /// Views are free.
    pub fn gas(&self, function: Function) -> u64 {
        match function {
            Function::Transaction(f) => self.transaction_gas(f),
            Function::View(_) => 0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (TxFunction, u64)> + '_ {
        self.entries.iter().map(|(f, g)| (*f, *g))
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prices {
    /// Ether per unit of gas.
    pub gas_price: Decimal,
    /// USD per Ether.
    pub ether_price: Decimal,
}

impl Default for Prices {
    fn default() -> Self {
        Prices {
            gas_price: Decimal::from_str(DEFAULT_GAS_PRICE).expect("valid constant"),
            ether_price: Decimal::from_str(DEFAULT_ETHER_PRICE).expect("valid constant"),
        }
    }
}

impl Prices {
    pub fn new(gas_price: Decimal, ether_price: Decimal) -> Result<Self, CostError> {
        if gas_price <= Decimal::ZERO {
            return Err(CostError::NonPositivePrice("gas price"));
        }
        if ether_price <= Decimal::ZERO {
            return Err(CostError::NonPositivePrice("ether price"));
        }
        Ok(Prices { gas_price, ether_price })
    }

    pub fn cost(&self, gas: u64) -> Cost {
        let ether = Decimal::from(gas) * self.gas_price;
        Cost { gas, ether, usd: ether * self.ether_price }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Cost {
    pub gas: u64,
    pub ether: Decimal,
    pub usd: Decimal,
}

impl core::ops::AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        self.gas += rhs.gas;
        self.ether += rhs.ether;
        self.usd += rhs.usd;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub function: Function,
    pub gas: u64,
    pub ether: Decimal,
    pub usd: Decimal,
    pub gas_price: Decimal,
    pub ether_price: Decimal,
}

pub fn cost_report(function: Function, schedule: &GasSchedule, prices: &Prices) -> CostReport {
    let cost = prices.cost(schedule.gas(function));
    CostReport {
        function,
        gas: cost.gas,
        ether: cost.ether,
        usd: cost.usd,
        gas_price: prices.gas_price,
        ether_price: prices.ether_price,
    }
}

/// Same as [`cost_report`] but resolves the function by name.
///
/// ```
/// use idms_core::cost::{cost_report_by_name, format_ether, format_usd, GasSchedule, Prices};
///
/// let r = cost_report_by_name("add_attribute", &GasSchedule::default_schedule(), &Prices::default()).unwrap();
/// assert_eq!(r.gas, 182045);
/// assert_eq!(format_ether(r.ether), "5.5E-4");
/// // 182045 gas * 3 gwei * $219.01 = $0.1196
/// assert_eq!(format_usd(r.usd), "$0.12");
/// ```
pub fn cost_report_by_name(name: &str, schedule: &GasSchedule, prices: &Prices) -> Result<CostReport, CostError> {
    let function = Function::from_str(name)?;
    Ok(cost_report(function, schedule, prices))
}

/// Cost of every sealed transaction, failed ones included, grouped by sender.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CostSummary {
    pub per_sender: BTreeMap<Address, Cost>,
    pub total: Cost,
    pub transactions: usize,
}

pub fn chain_cost_summary(chain: &Chain, schedule: &GasSchedule, prices: &Prices) -> CostSummary {
    let mut summary = CostSummary::default();
    for tx in chain.blocks().iter().flat_map(|b| b.transactions.iter()) {
        let cost = prices.cost(schedule.transaction_gas(tx.function));
        *summary.per_sender.entry(tx.sender).or_default() += cost;
        summary.total += cost;
        summary.transactions += 1;
    }
    summary
}

/// Two significant figures in scientific notation (`2.0E-4`). Zero prints
/// as `0`.
pub fn format_ether(ether: Decimal) -> String {
    if ether.is_zero() {
        return String::from("0");
    }
    let rounded = ether.round_sf(2).unwrap_or(ether).normalize();
    let digits = alloc::format!("{}", rounded.mantissa().unsigned_abs());
    let exponent = digits.len() as i64 - 1 - rounded.scale() as i64;
    let mut sig = digits.trim_end_matches('0').chars();
    let first = sig.next().unwrap_or('0');
    let second = sig.next().unwrap_or('0');
    let sign = if rounded.is_sign_negative() { "-" } else { "" };
    alloc::format!("{sign}{first}.{second}E{exponent}")
}

/// Dollars rounded to cents, e.g. `$0.12`. Zero prints as `$0`.
pub fn format_usd(usd: Decimal) -> String {
    if usd.is_zero() {
        return String::from("$0");
    }
    let cents = usd.round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero);
    alloc::format!("${:.2}", cents)
}

/// Parses plain (`0.000000003`) or scientific (`3.0e-9`) decimal text.
pub fn parse_decimal(text: &str) -> Option<Decimal> {
    let t = text.trim();
    if t.contains(['e', 'E']) {
        Decimal::from_scientific(t).ok()
    } else {
        Decimal::from_str(t).ok()
    }
}
