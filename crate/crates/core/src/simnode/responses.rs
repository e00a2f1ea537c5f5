//! Deterministic pseudo-state: every result is a pure function of
//! (method, params, head), so repeated queries return identical bytes.

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::classifier::parse_quantity;

const GENESIS_UNIX: u64 = 1_438_269_973;
const MAX_FEE_HISTORY: u64 = 16;

pub(crate) fn digest(tag: &str, parts: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    h.finalize().into()
}

fn hex32(tag: &str, parts: &[u64]) -> String {
    format!("0x{}", hex::encode(digest(tag, parts)))
}

fn address(tag: &str, parts: &[u64]) -> String {
    format!("0x{}", hex::encode(&digest(tag, parts)[..20]))
}

fn word(tag: &str, parts: &[u64]) -> u64 {
    u64::from_le_bytes(digest(tag, parts)[..8].try_into().expect("8 bytes"))
}

fn qty(n: u64) -> Value {
    Value::String(format!("{n:#x}"))
}

/// Bytes of a `0x` hex string, zero-padded or truncated to 8 bytes.
fn key_of(v: Option<&Value>) -> u64 {
    let Some(s) = v.and_then(Value::as_str) else {
        return 0;
    };
    let digits = s.trim_start_matches("0x");
    let take = digits.len().min(16);
    u64::from_str_radix(&digits[..take], 16).unwrap_or(0)
}

fn block_ref(v: Option<&Value>, head: u64) -> Option<u64> {
    match v.and_then(Value::as_str) {
        None | Some("latest") | Some("pending") | Some("safe") | Some("finalized") => Some(head),
        Some("earliest") => Some(0),
        Some(_) => parse_quantity(v?),
    }
}

fn tx_count(number: u64) -> u64 {
    word("txcount", &[number]) % 4
}

fn transaction(number: u64, index: u64) -> Value {
    json!({
        "blockHash": hex32("block", &[number]),
        "blockNumber": qty(number),
        "from": address("from", &[number, index]),
        "gas": qty(21_000 + word("gas", &[number, index]) % 200_000),
        "gasPrice": qty(1_000_000_000 + word("price", &[number]) % 50_000_000_000),
        "hash": hex32("tx", &[number, index]),
        "input": "0x",
        "nonce": qty(word("nonce", &[number, index]) % 4096),
        "to": address("to", &[number, index]),
        "transactionIndex": qty(index),
        "value": qty(word("value", &[number, index]) % 1_000_000_000_000_000_000),
    })
}

fn block(number: u64, full: bool) -> Value {
    let txs: Vec<Value> = (0..tx_count(number))
        .map(|i| {
            if full {
                transaction(number, i)
            } else {
                Value::String(hex32("tx", &[number, i]))
            }
        })
        .collect();
    json!({
        "baseFeePerGas": qty(7 + word("basefee", &[number]) % 40_000_000_000),
        "difficulty": "0x0",
        "gasLimit": "0x1c9c380",
        "gasUsed": qty(word("gasused", &[number]) % 30_000_000),
        "hash": hex32("block", &[number]),
        "miner": address("miner", &[number]),
        "nonce": "0x0000000000000000",
        "number": qty(number),
        "parentHash": hex32("block", &[number.saturating_sub(1)]),
        "size": qty(540 + 110 * txs.len() as u64),
        "timestamp": qty(GENESIS_UNIX + number * 12),
        "totalDifficulty": "0xc70d815d562d3cfa955",
        "transactions": txs,
        "uncles": [],
    })
}

/// Maps a hash-like key back into the recent chain window.
fn number_from_key(key: u64, head: u64) -> u64 {
    head.saturating_sub(key % 1_000)
}

fn receipt(number: u64, index: u64) -> Value {
    json!({
        "blockHash": hex32("block", &[number]),
        "blockNumber": qty(number),
        "contractAddress": null,
        "cumulativeGasUsed": qty(21_000 * (index + 1)),
        "effectiveGasPrice": qty(1_000_000_000 + word("price", &[number]) % 50_000_000_000),
        "from": address("from", &[number, index]),
        "gasUsed": qty(21_000),
        "logs": [],
        "status": "0x1",
        "to": address("to", &[number, index]),
        "transactionHash": hex32("tx", &[number, index]),
        "transactionIndex": qty(index),
    })
}

fn logs(from: u64, to: u64) -> Value {
    let to = to.max(from);
    let logs: Vec<Value> = (from..=to.min(from + 2))
        .filter(|n| word("haslog", &[*n]) % 2 == 0)
        .map(|n| {
            json!({
                "address": address("logaddr", &[n]),
                "blockHash": hex32("block", &[n]),
                "blockNumber": qty(n),
                "data": format!("0x{}", hex::encode(&digest("logdata", &[n])[..8])),
                "logIndex": "0x0",
                "removed": false,
                "topics": [hex32("topic", &[n])],
                "transactionHash": hex32("tx", &[n, 0]),
                "transactionIndex": "0x0",
            })
        })
        .collect();
    Value::Array(logs)
}

/// The result for a supported method, or `None` for an unknown method.
pub fn result_for(method: &str, params: &[Value], head: u64) -> Option<Value> {
    let p = |i: usize| params.get(i);
    let full = || p(1).and_then(Value::as_bool).unwrap_or(false);
    let v = match method {
        "eth_blockNumber" => qty(head),
        "eth_estimateGas" => {
            qty(21_000 + word("estimate", &[key_of(p(0).and_then(|o| o.get("to")))]) % 100_000)
        }
        "eth_gasPrice" => qty(1_000_000_000 + word("price", &[head]) % 50_000_000_000),
        "eth_getBalance" => qty(word(
            "balance",
            &[key_of(p(0)), block_ref(p(1), head).unwrap_or(head)],
        ) % 10u64.pow(19)),
        "eth_getTransactionCount" => qty(word("count", &[key_of(p(0))]) % 10_000),
        "eth_getCode" => Value::String(format!(
            "0x{}",
            hex::encode(&digest("code", &[key_of(p(0))])[..(key_of(p(0)) % 24) as usize])
        )),
        "eth_getStorageAt" => Value::String(hex32("storage", &[key_of(p(0)), key_of(p(1))])),
        "eth_feeHistory" => {
            let count = p(0)
                .and_then(|c| c.as_u64().or_else(|| parse_quantity(c)))
                .unwrap_or(1)
                .clamp(1, MAX_FEE_HISTORY);
            let newest = block_ref(p(1), head).unwrap_or(head).min(head);
            let oldest = newest.saturating_sub(count - 1);
            let base: Vec<Value> = (oldest..=newest + 1)
                .map(|n| qty(7 + word("basefee", &[n]) % 40_000_000_000))
                .collect();
            let ratio: Vec<Value> = (oldest..=newest)
                .map(|n| json!((word("gasused", &[n]) % 30_000_000) as f64 / 30_000_000.0))
                .collect();
            json!({ "oldestBlock": qty(oldest), "baseFeePerGas": base, "gasUsedRatio": ratio })
        }
        "eth_getBlockByNumber" => match block_ref(p(0), head) {
            Some(n) if n <= head => block(n, full()),
            _ => Value::Null,
        },
        "eth_getBlockByHash" => block(number_from_key(key_of(p(0)), head), full()),
        "eth_getBlockTransactionCountByNumber" => match block_ref(p(0), head) {
            Some(n) if n <= head => qty(tx_count(n)),
            _ => Value::Null,
        },
        "eth_getBlockTransactionCountByHash" => qty(tx_count(number_from_key(key_of(p(0)), head))),
        "eth_getTransactionByBlockNumberAndIndex" => {
            let idx = p(1).and_then(parse_quantity).unwrap_or(0);
            match block_ref(p(0), head) {
                Some(n) if n <= head && idx < tx_count(n) => transaction(n, idx),
                _ => Value::Null,
            }
        }
        "eth_getTransactionByBlockHashAndIndex" => {
            let n = number_from_key(key_of(p(0)), head);
            let idx = p(1).and_then(parse_quantity).unwrap_or(0);
            if idx < tx_count(n) {
                transaction(n, idx)
            } else {
                Value::Null
            }
        }
        "eth_getTransactionByHash" => {
            let key = key_of(p(0));
            transaction(number_from_key(key, head), 0)
        }
        "eth_getTransactionReceipt" => {
            let key = key_of(p(0));
            receipt(number_from_key(key, head), 0)
        }
        "eth_getLogs" => {
            let filter = p(0);
            let from = block_ref(filter.and_then(|f| f.get("fromBlock")), head).unwrap_or(head);
            let to = block_ref(filter.and_then(|f| f.get("toBlock")), head).unwrap_or(head);
            logs(from.min(head), to.min(head))
        }
        "eth_getUncleByBlockHashAndIndex" | "eth_getUncleByBlockNumberAndIndex" => Value::Null,
        "eth_getUncleCountByBlockHash" => qty(0),
        "eth_getUncleCountByBlockNumber" => match block_ref(p(0), head) {
            Some(n) if n <= head => qty(0),
            _ => Value::Null,
        },
        _ => return None,
    };
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{method_shape, schema::conforms, METHOD_POOL};
    use crate::workload::sample_params;
    use rand::SeedableRng;

    #[test]
    fn every_pool_method_yields_a_conforming_result() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let head = 0xa55e27;
        for method in METHOD_POOL {
            for _ in 0..20 {
                let params = sample_params(method, head, &mut rng);
                let v = result_for(method, &params, head).unwrap();
                assert!(
                    conforms(&method_shape(method).unwrap(), &v),
                    "{method} {params:?} -> {v}"
                );
            }
        }
    }

    #[test]
    fn results_are_deterministic() {
        let params = vec![json!("0xa55e27"), json!(true)];
        assert_eq!(
            result_for("eth_getBlockByNumber", &params, 0xa55e30),
            result_for("eth_getBlockByNumber", &params, 0xa55e30)
        );
        assert_eq!(
            result_for("eth_getBlockByNumber", &[json!("0xffffffff")], 5),
            Some(Value::Null)
        );
        assert_eq!(
            result_for("eth_blockNumber", &[], 0xa55e27),
            Some(json!("0xa55e27"))
        );
        assert!(result_for("eth_sendRawTransaction", &[], 1).is_none());
    }
}
