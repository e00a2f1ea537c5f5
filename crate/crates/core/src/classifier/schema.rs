//! Result shapes for the supported `eth_*` method pool.

use serde_json::{Map, Value};

/// The 21 read-only methods served by sub-nodes and sampled by Workload A.
pub const METHOD_POOL: [&str; 21] = [
    "eth_blockNumber",
    "eth_estimateGas",
    "eth_feeHistory",
    "eth_gasPrice",
    "eth_getBalance",
    "eth_getBlockByHash",
    "eth_getBlockByNumber",
    "eth_getBlockTransactionCountByHash",
    "eth_getBlockTransactionCountByNumber",
    "eth_getCode",
    "eth_getLogs",
    "eth_getStorageAt",
    "eth_getTransactionByBlockHashAndIndex",
    "eth_getTransactionByBlockNumberAndIndex",
    "eth_getTransactionByHash",
    "eth_getTransactionCount",
    "eth_getTransactionReceipt",
    "eth_getUncleByBlockHashAndIndex",
    "eth_getUncleByBlockNumberAndIndex",
    "eth_getUncleCountByBlockHash",
    "eth_getUncleCountByBlockNumber",
];

/// The latest-head query issued by Workload B.
pub const HEAD_QUERY: &str = "eth_blockNumber";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Quantity,
    Data,
    Hash,
    Block,
    Transaction,
    Receipt,
    Logs,
    FeeHistory,
    Nullable(&'static Shape),
}

pub fn method_shape(method: &str) -> Option<Shape> {
    use Shape::*;
    let shape = match method {
        "eth_blockNumber"
        | "eth_estimateGas"
        | "eth_gasPrice"
        | "eth_getBalance"
        | "eth_getTransactionCount" => Quantity,
        "eth_feeHistory" => FeeHistory,
        "eth_getBlockByHash"
        | "eth_getBlockByNumber"
        | "eth_getUncleByBlockHashAndIndex"
        | "eth_getUncleByBlockNumberAndIndex" => Nullable(&Block),
        "eth_getBlockTransactionCountByHash"
        | "eth_getBlockTransactionCountByNumber"
        | "eth_getUncleCountByBlockHash"
        | "eth_getUncleCountByBlockNumber" => Nullable(&Quantity),
        "eth_getCode" => Data,
        "eth_getLogs" => Logs,
        "eth_getStorageAt" => Hash,
        "eth_getTransactionByBlockHashAndIndex"
        | "eth_getTransactionByBlockNumberAndIndex"
        | "eth_getTransactionByHash" => Nullable(&Transaction),
        "eth_getTransactionReceipt" => Nullable(&Receipt),
        _ => return None,
    };
    Some(shape)
}

fn hex_digits(s: &str) -> Option<&str> {
    let digits = s.strip_prefix("0x")?;
    digits
        .bytes()
        .all(|b| b.is_ascii_hexdigit())
        .then_some(digits)
}

pub fn parse_quantity(v: &Value) -> Option<u64> {
    let digits = hex_digits(v.as_str()?)?;
    if digits.is_empty() {
        return None;
    }
    u64::from_str_radix(digits, 16).ok()
}

fn is_quantity(v: &Value) -> bool {
    v.as_str()
        .and_then(hex_digits)
        .is_some_and(|d| !d.is_empty())
}

fn is_data(v: &Value) -> bool {
    v.as_str()
        .and_then(hex_digits)
        .is_some_and(|d| d.len() % 2 == 0)
}

fn is_hash(v: &Value) -> bool {
    v.as_str()
        .and_then(hex_digits)
        .is_some_and(|d| d.len() == 64)
}

fn fields(obj: &Map<String, Value>, checks: &[(&str, fn(&Value) -> bool)]) -> bool {
    checks
        .iter()
        .all(|(name, check)| obj.get(*name).is_some_and(check))
}

fn is_array(v: &Value) -> bool {
    v.is_array()
}

fn is_log(v: &Value) -> bool {
    let Some(obj) = v.as_object() else {
        return false;
    };
    fields(
        obj,
        &[
            ("address", is_data),
            ("data", is_data),
            ("blockNumber", is_quantity),
        ],
    ) && obj
        .get("topics")
        .and_then(Value::as_array)
        .is_some_and(|t| t.iter().all(is_hash))
}

pub fn conforms(shape: &Shape, v: &Value) -> bool {
    match shape {
        Shape::Quantity => is_quantity(v),
        Shape::Data => is_data(v),
        Shape::Hash => is_hash(v),
        Shape::Nullable(inner) => v.is_null() || conforms(inner, v),
        Shape::Block => v.as_object().is_some_and(|o| {
            fields(
                o,
                &[
                    ("number", is_quantity),
                    ("gasLimit", is_quantity),
                    ("gasUsed", is_quantity),
                    ("timestamp", is_quantity),
                    ("transactions", is_array),
                    ("uncles", is_array),
                ],
            )
        }),
        Shape::Transaction => v.as_object().is_some_and(|o| {
            fields(
                o,
                &[
                    ("hash", is_hash),
                    ("from", is_data),
                    ("nonce", is_quantity),
                    ("value", is_quantity),
                ],
            )
        }),
        Shape::Receipt => v.as_object().is_some_and(|o| {
            fields(
                o,
                &[
                    ("transactionHash", is_hash),
                    ("blockNumber", is_quantity),
                    ("gasUsed", is_quantity),
                    ("status", is_quantity),
                    ("logs", is_array),
                ],
            )
        }),
        Shape::Logs => v.as_array().is_some_and(|logs| logs.iter().all(is_log)),
        Shape::FeeHistory => v.as_object().is_some_and(|o| {
            o.get("oldestBlock").is_some_and(is_quantity)
                && o.get("baseFeePerGas")
                    .and_then(Value::as_array)
                    .is_some_and(|a| a.iter().all(is_quantity))
                && o.get("gasUsedRatio")
                    .and_then(Value::as_array)
                    .is_some_and(|a| a.iter().all(Value::is_number))
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn every_pool_method_has_a_shape() {
        for m in METHOD_POOL {
            assert!(method_shape(m).is_some(), "{m}");
        }
        assert!(method_shape("eth_sendRawTransaction").is_none());
    }

    #[test]
    fn quantities() {
        assert_eq!(parse_quantity(&json!("0xa55e27")), Some(0xa55e27));
        assert_eq!(parse_quantity(&json!("0x")), None);
        assert_eq!(parse_quantity(&json!("a55e27")), None);
        assert_eq!(parse_quantity(&json!(12)), None);
        assert!(!is_data(&json!("0xabc")));
        assert!(is_data(&json!("0x")));
    }

    #[test]
    fn nullable_accepts_null() {
        assert!(conforms(&Shape::Nullable(&Shape::Block), &Value::Null));
        assert!(!conforms(&Shape::Block, &Value::Null));
    }
}
