#!/usr/bin/env python3
"""Regenerates the bundled Solidity fixtures under tests/fixtures.

Output is deterministic; the generated files are committed.

  pipeline/contracts/   30 contract files with labels.json, including one
                        near-duplicate pair sharing a filename
  adaptation/train/     60 contracts for the n-gram analogue
  adaptation/heldout/   15 contracts held out from training
"""

import json
import random
import re
import shutil
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

NOUNS = {
    "bank": ["Bank", "Vault", "Fund", "Wallet", "Safe", "Treasury"],
    "auction": ["Auction", "Market", "Bidding"],
    "lottery": ["Lottery", "Raffle", "Dice", "Game"],
    "timelock": ["Timelock", "Vesting", "Reserve", "Escrow"],
    "token": ["Token", "Coin", "Airdrop"],
    "crowdsale": ["Crowdsale", "Sale", "Presale"],
    "proxy": ["Proxy", "Router", "Forwarder"],
    "registry": ["Registry", "Directory", "Names"],
}
PREFIXES = ["Simple", "Easy", "Mega", "Quick", "Smart", "Eth", "Open", "Daily", "Lucky", "Prime", "Royal",
            "Happy", "Crypto", "Block", "Chain", "Golden", "Silver", "Green", "Blue", "Red"]
BALANCE_NAMES = ["balances", "deposits", "credit", "userBalance", "funds", "stakes", "holdings", "ledger"]
AMOUNT_NAMES = ["amount", "value", "wad", "qty", "sum", "payout"]
OWNER_NAMES = ["owner", "admin", "creator", "manager"]


def header(rng, modern):
    if modern:
        return "pragma solidity ^0.8.0;\n\n"
    return "pragma solidity ^0.4.%d;\n\n" % rng.choice([18, 19, 21, 24, 25])


def owner_block(owner):
    return (f"    address public {owner};\n\n"
            f"    modifier only{owner.capitalize()}() {{\n"
            f"        require(msg.sender == {owner});\n"
            f"        _;\n"
            f"    }}\n\n")


def bank(rng, name, vulnerable, modern=False):
    bal = rng.choice(BALANCE_NAMES)
    amt = rng.choice(AMOUNT_NAMES)
    withdraw = rng.choice(["withdraw", "withdrawBalance", "cashOut", "collect", "claim"])
    deposit = rng.choice(["deposit", "put", "addFunds", "pay"])
    src = header(rng, modern)
    src += f"contract {name} {{\n"
    src += f"    mapping(address => uint256) public {bal};\n"
    if rng.random() < 0.5:
        src += f"    uint256 public totalDeposits;\n"
    src += "\n"
    src += f"    function {deposit}() public payable {{\n"
    src += f"        {bal}[msg.sender] += msg.value;\n"
    src += "    }\n\n"
    src += f"    function {withdraw}(uint256 _{amt}) public {{\n"
    src += f"        require({bal}[msg.sender] >= _{amt});\n"
    if vulnerable:
        src += f"        if (msg.sender.call.value(_{amt})()) {{\n"
        src += f"            {bal}[msg.sender] -= _{amt};\n"
        src += "        }\n"
    else:
        src += f"        {bal}[msg.sender] -= _{amt};\n"
        src += f"        msg.sender.transfer(_{amt});\n"
    src += "    }\n\n"
    src += f"    function {rng.choice(['balanceOf', 'getBalance', 'creditOf'])}(address who) public view returns (uint256) {{\n"
    src += f"        return {bal}[who];\n"
    src += "    }\n"
    src += "}\n"
    return src


def lottery(rng, name, vulnerable, modern=False):
    owner = rng.choice(OWNER_NAMES)
    src = header(rng, modern)
    src += f"contract {name} {{\n"
    src += owner_block(owner)
    src += "    address[] public players;\n"
    src += f"    uint256 public {rng.choice(['deadline', 'endTime', 'closesAt'])};\n"
    src += f"    uint256 public ticketPrice = {rng.choice([1, 5, 10, 100])} finney;\n\n"
    src += "    function enter() public payable {\n"
    src += "        require(msg.value == ticketPrice);\n"
    src += "        players.push(msg.sender);\n"
    src += "    }\n\n"
    src += f"    function draw() public only{owner.capitalize()} {{\n"
    src += "        require(players.length > 0);\n"
    if vulnerable:
        time = rng.choice(["block.timestamp", "now"])
        src += f"        uint256 index = uint256(keccak256(abi.encodePacked({time}, players.length))) % players.length;\n"
    else:
        src += "        uint256 index = uint256(keccak256(abi.encodePacked(blockhash(block.number - 1), players.length))) % players.length;\n"
    src += "        address winner = players[index];\n"
    src += "        delete players;\n"
    src += "        winner.transfer(address(this).balance);\n"
    src += "    }\n"
    src += "}\n"
    return src


def timelock(rng, name, vulnerable, modern=False):
    bal = rng.choice(BALANCE_NAMES)
    lock = rng.choice(["lockTime", "unlockAt", "releaseTime", "lockedUntil"])
    src = header(rng, modern)
    src += f"contract {name} {{\n"
    src += f"    mapping(address => uint256) public {bal};\n"
    src += f"    mapping(address => uint256) public {lock};\n\n"
    src += "    function deposit() public payable {\n"
    src += f"        {bal}[msg.sender] += msg.value;\n"
    if vulnerable:
        src += f"        {lock}[msg.sender] = now + {rng.choice([1, 7, 30])} days;\n"
    else:
        src += f"        {lock}[msg.sender] = block.number + {rng.choice([5760, 40320, 172800])};\n"
    src += "    }\n\n"
    src += "    function release() public {\n"
    src += f"        require({bal}[msg.sender] > 0);\n"
    if vulnerable:
        src += f"        require(block.timestamp > {lock}[msg.sender]);\n"
    else:
        src += f"        require(block.number > {lock}[msg.sender]);\n"
    src += f"        uint256 payout = {bal}[msg.sender];\n"
    src += f"        {bal}[msg.sender] = 0;\n"
    src += "        msg.sender.transfer(payout);\n"
    src += "    }\n"
    src += "}\n"
    return src


def token(rng, name, vulnerable, modern=False):
    bal = rng.choice(["balanceOf", "balances", "holdings"])
    supply = rng.choice(["totalSupply", "supply", "issued"])
    src = header(rng, modern)
    if not vulnerable and not modern:
        src += safemath_library()
    src += f"contract {name} {{\n"
    if not vulnerable and not modern:
        src += "    using SafeMath for uint256;\n\n"
    src += f"    string public name = \"{name}\";\n"
    src += f"    string public symbol = \"{name[:3].upper()}\";\n"
    src += "    uint8 public decimals = 18;\n"
    src += f"    uint256 public {supply};\n"
    src += f"    mapping(address => uint256) public {bal};\n\n"
    src += "    event Transfer(address indexed from, address indexed to, uint256 value);\n\n"
    src += "    function transfer(address _to, uint256 _value) public returns (bool) {\n"
    if vulnerable:
        src += f"        require({bal}[msg.sender] - _value >= 0);\n"
        src += f"        {bal}[msg.sender] -= _value;\n"
        src += f"        {bal}[_to] += _value;\n"
    elif modern:
        src += f"        require({bal}[msg.sender] >= _value);\n"
        src += f"        {bal}[msg.sender] -= _value;\n"
        src += f"        {bal}[_to] += _value;\n"
    else:
        src += f"        {bal}[msg.sender] = {bal}[msg.sender].sub(_value);\n"
        src += f"        {bal}[_to] = {bal}[_to].add(_value);\n"
    src += "        emit Transfer(msg.sender, _to, _value);\n"
    src += "        return true;\n"
    src += "    }\n\n"
    if rng.random() < 0.6:
        src += "    function batchTransfer(address[] _receivers, uint256 _value) public returns (bool) {\n"
        if vulnerable:
            src += "        uint256 total = _receivers.length * _value;\n"
        elif modern:
            src += "        uint256 total = _receivers.length * _value;\n"
        else:
            src += "        uint256 total = _value.mul(_receivers.length);\n"
        src += f"        require({bal}[msg.sender] >= total);\n"
        src += "        for (uint256 i = 0; i < _receivers.length; i++) {\n"
        src += f"            {bal}[_receivers[i]] += _value;\n"
        src += "        }\n"
        src += f"        {bal}[msg.sender] -= total;\n"
        src += "        return true;\n"
        src += "    }\n"
    src += "}\n"
    return src


def safemath_library():
    return ("library SafeMath {\n"
            "    function add(uint256 a, uint256 b) internal pure returns (uint256) {\n"
            "        uint256 c = a + b;\n"
            "        require(c >= a);\n"
            "        return c;\n"
            "    }\n\n"
            "    function sub(uint256 a, uint256 b) internal pure returns (uint256) {\n"
            "        require(b <= a);\n"
            "        return a - b;\n"
            "    }\n\n"
            "    function mul(uint256 a, uint256 b) internal pure returns (uint256) {\n"
            "        if (a == 0) {\n"
            "            return 0;\n"
            "        }\n"
            "        uint256 c = a * b;\n"
            "        require(c / a == b);\n"
            "        return c;\n"
            "    }\n"
            "}\n\n")


def proxy(rng, name, vulnerable, modern=False):
    owner = rng.choice(OWNER_NAMES)
    impl = rng.choice(["implementation", "target", "logic", "delegate"])
    src = header(rng, modern)
    src += f"contract {name} {{\n"
    src += owner_block(owner)
    src += f"    address public {impl};\n\n"
    src += f"    function upgrade(address _new) public only{owner.capitalize()} {{\n"
    src += f"        {impl} = _new;\n"
    src += "    }\n\n"
    if vulnerable:
        src += "    function forward(address _callee, bytes _data) public {\n"
        src += "        require(_callee.delegatecall(_data));\n"
        src += "    }\n"
    else:
        src += f"    function forward(bytes _data) public only{owner.capitalize()} {{\n"
        src += f"        require({impl} != address(0));\n"
        src += f"        require({impl}.delegatecall(_data));\n"
        src += "    }\n"
    src += "}\n"
    return src


def auction(rng, name, vulnerable, modern=False):
    src = header(rng, modern)
    bidder = rng.choice(["highestBidder", "leader", "topBidder"])
    bid = rng.choice(["highestBid", "topBid", "leadingBid"])
    src += f"contract {name} {{\n"
    src += f"    address public {bidder};\n"
    src += f"    uint256 public {bid};\n"
    src += "    mapping(address => uint256) public refunds;\n\n"
    src += "    function bid() public payable {\n"
    src += f"        require(msg.value > {bid});\n"
    src += f"        if ({bidder} != address(0)) {{\n"
    src += f"            refunds[{bidder}] += {bid};\n"
    src += "        }\n"
    src += f"        {bidder} = msg.sender;\n"
    src += f"        {bid} = msg.value;\n"
    src += "    }\n\n"
    src += "    function withdrawRefund() public {\n"
    src += "        uint256 refund = refunds[msg.sender];\n"
    if vulnerable:
        src += "        require(msg.sender.call.value(refund)());\n"
        src += "        refunds[msg.sender] = 0;\n"
    else:
        src += "        refunds[msg.sender] = 0;\n"
        src += "        msg.sender.transfer(refund);\n"
    src += "    }\n"
    src += "}\n"
    return src


def crowdsale(rng, name, vulnerable, modern=False):
    rate = rng.choice([100, 250, 1000, 5000])
    src = header(rng, modern)
    src += f"contract {name} {{\n"
    src += "    mapping(address => uint256) public purchased;\n"
    src += "    uint256 public raised;\n"
    src += f"    uint256 public rate = {rate};\n"
    src += f"    uint256 public {rng.choice(['openingTime', 'startTime'])};\n\n"
    src += "    function buy() public payable {\n"
    if vulnerable:
        src += "        uint256 tokens = msg.value * rate;\n"
        src += "        purchased[msg.sender] += tokens;\n"
        src += "        raised += msg.value;\n"
    else:
        src += "        uint256 tokens = msg.value * rate;\n"
        src += "        require(tokens / rate == msg.value);\n"
        src += "        require(purchased[msg.sender] + tokens >= purchased[msg.sender]);\n"
        src += "        purchased[msg.sender] += tokens;\n"
        src += "        raised += msg.value;\n"
    src += "    }\n"
    src += "}\n"
    return src


def registry(rng, name, vulnerable, modern=False):
    owner = rng.choice(OWNER_NAMES)
    src = header(rng, modern)
    src += f"contract {name} {{\n"
    src += owner_block(owner)
    src += "    mapping(bytes32 => address) public records;\n"
    src += "    event Registered(bytes32 indexed key, address value);\n\n"
    src += f"    function register(bytes32 _key, address _value) public only{owner.capitalize()} {{\n"
    src += "        require(records[_key] == address(0));\n"
    src += "        records[_key] = _value;\n"
    src += "        emit Registered(_key, _value);\n"
    src += "    }\n\n"
    src += "    function lookup(bytes32 _key) public view returns (address) {\n"
    src += "        return records[_key];\n"
    src += "    }\n"
    src += "}\n"
    return src


TEMPLATES = {
    "bank": (bank, "reentrancy"),
    "auction": (auction, "reentrancy"),
    "lottery": (lottery, "timestamp_dependency"),
    "timelock": (timelock, "timestamp_dependency"),
    "token": (token, "integer_overflow_underflow"),
    "crowdsale": (crowdsale, "integer_overflow_underflow"),
    "proxy": (proxy, "delegatecall"),
    "registry": (registry, None),
}
TYPES = ["reentrancy", "timestamp_dependency", "integer_overflow_underflow", "delegatecall"]


def contract_name(rng, used, kind):
    for attempt in range(1000):
        n = rng.choice(PREFIXES) + rng.choice(NOUNS[kind])
        if attempt > 100:
            n += str(attempt)
        if n not in used:
            used.add(n)
            return n
    raise RuntimeError("name space exhausted")


def modernize(src):
    src = re.sub(r"if \(msg\.sender\.call\.value\(([^)]*)\)\(\)\) \{",
                 r'(bool ok, ) = msg.sender.call{value: \1}("");\n        if (ok) {', src)
    src = re.sub(r"require\(msg\.sender\.call\.value\(([^)]*)\)\(\)\);",
                 r'(bool ok, ) = msg.sender.call{value: \1}("");\n        require(ok);', src)
    src = re.sub(r"require\((\w+)\.delegatecall\((\w+)\)\);",
                 r"(bool ok, ) = \1.delegatecall(\2);\n        require(ok);", src)
    src = re.sub(r"\bnow\b", "block.timestamp", src)
    src = src.replace("msg.sender.transfer(", "payable(msg.sender).transfer(")
    src = src.replace("winner.transfer(", "payable(winner).transfer(")
    src = src.replace("bytes _data", "bytes memory _data")
    src = src.replace("address[] _receivers", "address[] memory _receivers")
    src = src.replace(" finney;", " * 1e15;")
    return src


def render(kind, rng, name, vulnerable, modern=False):
    src = TEMPLATES[kind][0](rng, name, vulnerable, modern)
    return modernize(src) if modern else src


def write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def labels_for(kind, vulnerable, src):
    labels = {t: 0 for t in TYPES}
    target = TEMPLATES[kind][1]
    if target and vulnerable:
        labels[target] = 1
    return labels


def gen_pipeline():
    rng = random.Random(2024)
    out = ROOT / "pipeline"
    if out.exists():
        shutil.rmtree(out)
    used = set()
    labels = {}
    kinds = ["bank", "auction", "lottery", "timelock", "token", "crowdsale", "proxy", "registry"]
    plan = []
    for i in range(27):
        kind = kinds[i % len(kinds)]
        vulnerable = (i // len(kinds)) % 2 == 0 or rng.random() < 0.3
        plan.append((kind, vulnerable))
    for i, (kind, vulnerable) in enumerate(plan):
        name = contract_name(rng, used, kind)
        src = render(kind, rng, name, vulnerable)
        write(out / "contracts" / f"{i:02d}_{kind}" / f"{name}.sol", src)
        labels[name] = labels_for(kind, vulnerable, src)
    # Near-duplicate pair: same filename, one identifier renamed.
    base = bank(random.Random(7), "SharedBank", True)
    write(out / "contracts" / "mirror_a" / "SharedBank.sol", base)
    write(out / "contracts" / "mirror_b" / "SharedBank.sol", base.replace("who", "account"))
    labels["SharedBank"] = labels_for("bank", True, base)
    name = contract_name(rng, used, "proxy")
    write(out / "contracts" / "late" / f"{name}.sol", render("proxy", rng, name, True))
    labels[name] = labels_for("proxy", True, "")
    write(out / "labels.json", json.dumps(dict(sorted(labels.items())), indent=2) + "\n")


def gen_adaptation():
    rng = random.Random(99)
    out = ROOT / "adaptation"
    if out.exists():
        shutil.rmtree(out)
    used = set()
    kinds = list(TEMPLATES)
    for split, count in (("train", 60), ("heldout", 15)):
        for i in range(count):
            kind = rng.choice(kinds)
            name = contract_name(rng, used, kind)
            src = render(kind, rng, name, rng.random() < 0.5, modern=rng.random() < 0.3)
            write(out / split / f"{i:02d}_{name}.sol", src)


if __name__ == "__main__":
    gen_pipeline()
    gen_adaptation()
