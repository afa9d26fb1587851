"""Regenerate src/rcabench/configs/trainticket50.yaml.

The layout follows the public Train-Ticket service set: 46 application
services plus 4 unmonitored infrastructure components.  Four application
services are deployed but never exercised by any workflow.
"""

from pathlib import Path

import yaml

INFRA = ["mysql", "redis", "rabbitmq", "nacos"]
IDLE = ["ts-avatar-service", "ts-news-service", "ts-ticket-office-service", "ts-wait-order-service"]
REPLICAS = {"ts-order-service": 2, "ts-travel-service": 2, "ts-basic-service": 2, "ts-seat-service": 2, "ts-station-service": 2}
SIDECARS = {"ts-gateway-service", "ts-ui-dashboard"}

# (service, operation) -> [(callee, operation, latency_ms, payload_bytes)]
STATIC = {
    ("ts-preserve-service", "preserve"): [
        ("ts-security-service", "check", 8, 512),
        ("ts-contacts-service", "getContactsById", 6, 1024),
        ("ts-travel-service", "getTripAllDetailInfo", 12, 4096),
        ("ts-seat-service", "distributeSeat", 10, 1024),
        ("ts-order-service", "create", 15, 2048),
        ("ts-assurance-service", "create", 6, 512),
        ("ts-user-service", "findByUserId", 5, 512),
        ("ts-notification-service", "preserveSuccess", 4, 512),
    ],
    ("ts-preserve-other-service", "preserve"): [
        ("ts-security-service", "check", 8, 512),
        ("ts-contacts-service", "getContactsById", 6, 1024),
        ("ts-travel2-service", "getTripAllDetailInfo", 12, 4096),
        ("ts-seat-service", "distributeSeat", 10, 1024),
        ("ts-order-other-service", "create", 15, 2048),
        ("ts-food-service", "createFoodOrder", 6, 1024),
        ("ts-consign-service", "insertConsign", 8, 1024),
        ("ts-notification-service", "preserveSuccess", 4, 512),
    ],
    ("ts-security-service", "check"): [
        ("ts-order-service", "securityInfo", 6, 512),
        ("ts-order-other-service", "securityInfo", 6, 512),
        ("mysql", "select", 2, 256),
    ],
    ("ts-contacts-service", "getContactsById"): [("mysql", "select", 2, 256)],
    ("ts-contacts-service", "getContactsByAccountId"): [("mysql", "select", 3, 512)],
    ("ts-contacts-service", "createContact"): [("mysql", "insert", 4, 512)],
    ("ts-travel-service", "getTripAllDetailInfo"): [
        ("ts-basic-service", "queryForTravel", 10, 2048),
        ("ts-seat-service", "getLeftTicketOfInterval", 8, 1024),
        ("mysql", "select", 3, 512),
    ],
    ("ts-travel2-service", "getTripAllDetailInfo"): [
        ("ts-basic-service", "queryForTravel", 10, 2048),
        ("ts-seat-service", "getLeftTicketOfInterval", 8, 1024),
        ("mysql", "select", 3, 512),
    ],
    ("ts-travel-service", "queryInfo"): [
        ("ts-basic-service", "queryForTravel", 10, 2048),
        ("mysql", "select", 3, 1024),
    ],
    ("ts-travel2-service", "queryInfo"): [
        ("ts-basic-service", "queryForTravel", 10, 2048),
        ("mysql", "select", 3, 1024),
    ],
    ("ts-travel-service", "getTrainTypeByTripId"): [("ts-train-service", "retrieve", 4, 512)],
    ("ts-basic-service", "queryForTravel"): [
        ("ts-station-service", "queryByIdBatch", 5, 1024),
        ("ts-train-service", "retrieve", 4, 512),
        ("ts-price-service", "query", 6, 512),
    ],
    ("ts-price-service", "query"): [
        ("ts-route-service", "queryById", 5, 1024),
        ("mysql", "select", 2, 256),
    ],
    ("ts-route-service", "queryById"): [
        ("ts-station-service", "queryByIdBatch", 4, 512),
        ("mysql", "select", 2, 256),
    ],
    ("ts-route-service", "queryAll"): [("mysql", "select", 4, 2048)],
    ("ts-station-service", "queryByIdBatch"): [("mysql", "select", 2, 256)],
    ("ts-station-service", "queryAll"): [("mysql", "select", 3, 2048)],
    ("ts-train-service", "retrieve"): [("mysql", "select", 2, 256)],
    ("ts-seat-service", "getLeftTicketOfInterval"): [
        ("ts-order-service", "getTicketListByDateAndTripId", 8, 2048),
        ("ts-config-service", "query", 3, 256),
    ],
    ("ts-seat-service", "distributeSeat"): [
        ("ts-order-service", "getTicketListByDateAndTripId", 8, 2048),
        ("ts-config-service", "query", 3, 256),
    ],
    ("ts-config-service", "query"): [("mysql", "select", 2, 128)],
    ("ts-order-service", "create"): [("mysql", "insert", 5, 1024)],
    ("ts-order-service", "securityInfo"): [("mysql", "select", 3, 512)],
    ("ts-order-service", "getTicketListByDateAndTripId"): [("mysql", "select", 4, 2048)],
    ("ts-order-service", "queryOrders"): [
        ("ts-station-service", "queryByIdBatch", 5, 512),
        ("mysql", "select", 4, 4096),
    ],
    ("ts-order-service", "modifyOrder"): [("mysql", "update", 4, 512)],
    ("ts-order-other-service", "create"): [("mysql", "insert", 5, 1024)],
    ("ts-order-other-service", "securityInfo"): [("mysql", "select", 3, 512)],
    ("ts-order-other-service", "queryOrders"): [
        ("ts-station-service", "queryByIdBatch", 5, 512),
        ("mysql", "select", 4, 4096),
    ],
    ("ts-order-other-service", "modifyOrder"): [("mysql", "update", 4, 512)],
    ("ts-assurance-service", "create"): [("mysql", "insert", 3, 256)],
    ("ts-assurance-service", "getAllAssuranceType"): [("mysql", "select", 2, 256)],
    ("ts-user-service", "findByUserId"): [("mysql", "select", 2, 256)],
    ("ts-user-service", "findByUserName"): [("mysql", "select", 2, 256)],
    ("ts-user-service", "register"): [
        ("ts-auth-service", "createDefaultAuth", 6, 512),
        ("mysql", "insert", 4, 512),
    ],
    ("ts-auth-service", "login"): [
        ("ts-verification-code-service", "verifyCode", 4, 256),
        ("mysql", "select", 2, 256),
    ],
    ("ts-auth-service", "createDefaultAuth"): [("mysql", "insert", 3, 256)],
    ("ts-auth-service", "verifyToken"): [("mysql", "select", 2, 256)],
    ("ts-verification-code-service", "verifyCode"): [("redis", "get", 1, 128)],
    ("ts-verification-code-service", "generate"): [("redis", "set", 1, 256)],
    ("ts-notification-service", "preserveSuccess"): [("rabbitmq", "publish", 2, 512)],
    ("ts-notification-service", "orderCancelSuccess"): [("rabbitmq", "publish", 2, 512)],
    ("ts-food-service", "createFoodOrder"): [("mysql", "insert", 3, 512)],
    ("ts-food-service", "getAllFood"): [
        ("ts-station-food-service", "listFoodStores", 6, 2048),
        ("ts-train-food-service", "listTrainFood", 5, 1024),
        ("ts-travel-service", "getTrainTypeByTripId", 6, 256),
    ],
    ("ts-station-food-service", "listFoodStores"): [("mysql", "select", 3, 2048)],
    ("ts-train-food-service", "listTrainFood"): [("mysql", "select", 3, 1024)],
    ("ts-food-delivery-service", "createFoodDeliveryOrder"): [
        ("ts-station-food-service", "listFoodStores", 6, 2048),
        ("ts-delivery-service", "dispatch", 5, 512),
        ("mysql", "insert", 3, 512),
    ],
    ("ts-delivery-service", "dispatch"): [("rabbitmq", "publish", 2, 512), ("mysql", "insert", 3, 256)],
    ("ts-consign-service", "insertConsign"): [
        ("ts-consign-price-service", "getPriceByWeightAndRegion", 5, 256),
        ("mysql", "insert", 3, 512),
    ],
    ("ts-consign-price-service", "getPriceByWeightAndRegion"): [
        ("ts-config-service", "query", 3, 128),
        ("mysql", "select", 2, 128),
    ],
    ("ts-inside-payment-service", "pay"): [
        ("ts-order-service", "modifyOrder", 6, 512),
        ("ts-payment-service", "pay", 10, 512),
        ("mysql", "insert", 3, 256),
    ],
    ("ts-inside-payment-service", "drawBack"): [("ts-payment-service", "refund", 8, 512)],
    ("ts-payment-service", "pay"): [("mysql", "insert", 3, 256)],
    ("ts-payment-service", "refund"): [("mysql", "update", 3, 256)],
    ("ts-voucher-service", "getVoucher"): [
        ("ts-order-service", "queryOrders", 8, 1024),
        ("mysql", "select", 2, 256),
    ],
    ("ts-cancel-service", "cancel"): [
        ("ts-order-service", "modifyOrder", 6, 512),
        ("ts-inside-payment-service", "drawBack", 8, 512),
        ("ts-user-service", "findByUserId", 4, 256),
        ("ts-notification-service", "orderCancelSuccess", 4, 256),
    ],
    ("ts-rebook-service", "rebook"): [
        ("ts-order-service", "queryOrders", 8, 1024),
        ("ts-travel-service", "getTripAllDetailInfo", 12, 4096),
        ("ts-seat-service", "distributeSeat", 10, 1024),
        ("ts-inside-payment-service", "pay", 10, 512),
    ],
    ("ts-execute-service", "collect"): [
        ("ts-order-service", "modifyOrder", 5, 256),
        ("ts-order-other-service", "modifyOrder", 5, 256),
    ],
    ("ts-travel-plan-service", "getCheapest"): [("ts-route-plan-service", "cheapestRoute", 15, 4096)],
    ("ts-travel-plan-service", "getQuickest"): [("ts-route-plan-service", "quickestRoute", 15, 4096)],
    ("ts-travel-plan-service", "getMinStation"): [("ts-route-plan-service", "minStopStations", 15, 4096)],
    ("ts-route-plan-service", "cheapestRoute"): [
        ("ts-travel-service", "queryInfo", 10, 2048),
        ("ts-travel2-service", "queryInfo", 10, 2048),
    ],
    ("ts-route-plan-service", "quickestRoute"): [
        ("ts-travel-service", "queryInfo", 10, 2048),
        ("ts-travel2-service", "queryInfo", 10, 2048),
    ],
    ("ts-route-plan-service", "minStopStations"): [
        ("ts-route-service", "queryAll", 8, 2048),
        ("ts-travel-service", "queryInfo", 10, 2048),
    ],
    ("ts-gateway-service", "adminBasic"): [("ts-admin-basic-info-service", "getAll", 6, 1024)],
    ("ts-gateway-service", "adminOrder"): [("ts-admin-order-service", "getAllOrders", 6, 4096)],
    ("ts-gateway-service", "adminRoute"): [("ts-admin-route-service", "getAllRoutes", 6, 2048)],
    ("ts-gateway-service", "adminTravel"): [("ts-admin-travel-service", "getAllTravels", 6, 2048)],
    ("ts-gateway-service", "adminUser"): [("ts-admin-user-service", "getAllUsers", 6, 2048)],
    ("ts-admin-basic-info-service", "getAll"): [
        ("ts-station-service", "queryAll", 5, 2048),
        ("ts-train-service", "retrieve", 4, 512),
        ("ts-config-service", "query", 3, 256),
        ("ts-price-service", "query", 5, 512),
    ],
    ("ts-admin-order-service", "getAllOrders"): [
        ("ts-order-service", "queryOrders", 8, 4096),
        ("ts-order-other-service", "queryOrders", 8, 4096),
    ],
    ("ts-admin-route-service", "getAllRoutes"): [("ts-route-service", "queryAll", 6, 2048)],
    ("ts-admin-travel-service", "getAllTravels"): [
        ("ts-travel-service", "queryInfo", 8, 2048),
        ("ts-travel2-service", "queryInfo", 8, 2048),
    ],
    ("ts-admin-user-service", "getAllUsers"): [("ts-user-service", "findByUserName", 5, 2048)],
}

# service-side processing time (ms) for each operation, used as edge latency
# when the operation is the target of a workflow transition
UI = "ts-ui-dashboard"

WORKFLOWS = [
    {
        "name": "new_contact",
        "root": {"service": "ts-contacts-service", "operation": "createContact", "latency_ms": 6},
        "states": [
            {"name": "verify_identity", "transitions": [
                {"name": "by_user_name", "service": "ts-user-service", "operation": "findByUserName"},
                {"name": "by_user_id", "service": "ts-user-service", "operation": "findByUserId"},
                {"name": "by_token", "service": "ts-auth-service", "operation": "verifyToken"},
                {"name": "by_code", "service": "ts-verification-code-service", "operation": "verifyCode"},
                {"name": "by_security", "service": "ts-security-service", "operation": "check"},
            ]},
        ],
    },
    {
        "name": "booking",
        "root": {"service": UI, "operation": "booking", "latency_ms": 4},
        "states": [
            {"name": "passenger", "transitions": [
                {"name": "query_existing", "service": "ts-contacts-service", "operation": "getContactsByAccountId"},
                {"name": "create_new", "sub_workflow": "new_contact"},
            ]},
            {"name": "seat", "transitions": [
                {"name": "left_tickets", "service": "ts-seat-service", "operation": "getLeftTicketOfInterval"},
                {"name": "trip_detail", "service": "ts-travel-service", "operation": "getTripAllDetailInfo"},
                {"name": "train_type", "service": "ts-travel-service", "operation": "getTrainTypeByTripId"},
            ]},
            {"name": "insurance", "transitions": [
                {"name": "with_assurance", "service": "ts-assurance-service", "operation": "getAllAssuranceType"},
                {"name": "with_food", "service": "ts-food-service", "operation": "getAllFood"},
            ]},
            {"name": "submit", "transitions": [
                {"name": "preserve", "service": "ts-preserve-service", "operation": "preserve"},
            ]},
        ],
    },
    {
        "name": "booking_other",
        "root": {"service": UI, "operation": "bookingOther", "latency_ms": 4},
        "states": [
            {"name": "passenger", "transitions": [
                {"name": "query_existing", "service": "ts-contacts-service", "operation": "getContactsByAccountId"},
                {"name": "create_new", "sub_workflow": "new_contact"},
            ]},
            {"name": "submit", "transitions": [
                {"name": "preserve_other", "service": "ts-preserve-other-service", "operation": "preserve"},
            ]},
        ],
    },
    {
        "name": "search",
        "root": {"service": UI, "operation": "search", "latency_ms": 3},
        "states": [
            {"name": "plan", "transitions": [
                {"name": "cheapest", "service": "ts-travel-plan-service", "operation": "getCheapest"},
                {"name": "quickest", "service": "ts-travel-plan-service", "operation": "getQuickest"},
                {"name": "min_station", "service": "ts-travel-plan-service", "operation": "getMinStation"},
                {"name": "direct", "service": "ts-travel-service", "operation": "queryInfo"},
                {"name": "direct_other", "service": "ts-travel2-service", "operation": "queryInfo"},
            ]},
        ],
    },
    {
        "name": "orders",
        "root": {"service": UI, "operation": "orders", "latency_ms": 3},
        "states": [
            {"name": "action", "transitions": [
                {"name": "list", "service": "ts-order-service", "operation": "queryOrders"},
                {"name": "list_other", "service": "ts-order-other-service", "operation": "queryOrders"},
                {"name": "cancel", "service": "ts-cancel-service", "operation": "cancel"},
                {"name": "rebook", "service": "ts-rebook-service", "operation": "rebook"},
                {"name": "collect", "service": "ts-execute-service", "operation": "collect"},
            ]},
            {"name": "settle", "transitions": [
                {"name": "pay", "service": "ts-inside-payment-service", "operation": "pay"},
                {"name": "voucher", "service": "ts-voucher-service", "operation": "getVoucher"},
            ]},
        ],
    },
    {
        "name": "extras",
        "root": {"service": UI, "operation": "extras", "latency_ms": 3},
        "states": [
            {"name": "service", "transitions": [
                {"name": "consign", "service": "ts-consign-service", "operation": "insertConsign"},
                {"name": "food_menu", "service": "ts-food-service", "operation": "getAllFood"},
                {"name": "food_delivery", "service": "ts-food-delivery-service", "operation": "createFoodDeliveryOrder"},
            ]},
        ],
    },
    {
        "name": "account",
        "root": {"service": UI, "operation": "account", "latency_ms": 3},
        "states": [
            {"name": "action", "transitions": [
                {"name": "login", "service": "ts-auth-service", "operation": "login"},
                {"name": "register", "service": "ts-user-service", "operation": "register"},
                {"name": "send_code", "service": "ts-verification-code-service", "operation": "generate"},
            ]},
        ],
    },
    {
        "name": "admin",
        "root": {"service": UI, "operation": "admin", "latency_ms": 3},
        "states": [
            {"name": "console", "transitions": [
                {"name": "basic", "service": "ts-gateway-service", "operation": "adminBasic"},
                {"name": "orders", "service": "ts-gateway-service", "operation": "adminOrder"},
                {"name": "routes", "service": "ts-gateway-service", "operation": "adminRoute"},
                {"name": "travels", "service": "ts-gateway-service", "operation": "adminTravel"},
                {"name": "users", "service": "ts-gateway-service", "operation": "adminUser"},
            ]},
        ],
    },
]

# processing time of workflow-invoked operations that have no static entry for latency
TRANSITION_LATENCY = {
    "getContactsByAccountId": 6, "createContact": 8, "getLeftTicketOfInterval": 10,
    "getTripAllDetailInfo": 14, "getTrainTypeByTripId": 5, "getAllAssuranceType": 4, "getAllFood": 8,
    "preserve": 25, "getCheapest": 12, "getQuickest": 12, "getMinStation": 12, "queryInfo": 10,
    "queryOrders": 10, "cancel": 12, "rebook": 15, "collect": 8, "pay": 10, "getVoucher": 6,
    "insertConsign": 8, "createFoodDeliveryOrder": 10, "login": 10, "register": 12, "generate": 4,
    "adminBasic": 4, "adminOrder": 4, "adminRoute": 4, "adminTravel": 4, "adminUser": 4,
    "findByUserName": 5, "findByUserId": 5, "verifyToken": 4, "verifyCode": 4, "check": 8,
}

APP = [
    "ts-ui-dashboard", "ts-gateway-service", "ts-auth-service", "ts-user-service",
    "ts-verification-code-service", "ts-contacts-service", "ts-station-service", "ts-train-service",
    "ts-config-service", "ts-route-service", "ts-price-service", "ts-basic-service", "ts-travel-service",
    "ts-travel2-service", "ts-seat-service", "ts-order-service", "ts-order-other-service",
    "ts-preserve-service", "ts-preserve-other-service", "ts-security-service", "ts-assurance-service",
    "ts-food-service", "ts-station-food-service", "ts-train-food-service", "ts-food-delivery-service",
    "ts-consign-service", "ts-consign-price-service", "ts-inside-payment-service", "ts-payment-service",
    "ts-cancel-service", "ts-rebook-service", "ts-execute-service", "ts-notification-service",
    "ts-travel-plan-service", "ts-route-plan-service", "ts-delivery-service", "ts-voucher-service",
    "ts-admin-basic-info-service", "ts-admin-order-service", "ts-admin-route-service",
    "ts-admin-travel-service", "ts-admin-user-service",
] + IDLE

EXTRA_OPERATIONS = {
    # deployed handlers that no workflow reaches
    "ts-order-service": ["exportOrders", "deleteOrder"],
    "ts-travel-service": ["adminQueryAll"],
    "ts-user-service": ["deleteUser"],
    "ts-payment-service": ["queryAll"],
    "ts-station-service": ["deleteStation"],
    "ts-avatar-service": ["upload"],
    "ts-news-service": ["hello"],
    "ts-ticket-office-service": ["getAllOffices"],
    "ts-wait-order-service": ["create"],
}


def build() -> dict:
    edges = []
    seen = set()

    def add(caller, caller_op, callee, op, latency, payload):
        key = (caller, caller_op, callee, op)
        if key in seen:
            return
        seen.add(key)
        e = {"caller": caller, "callee": callee, "operation": op, "caller_operation": caller_op,
             "latency_ms": latency, "payload_bytes": payload}
        if callee in INFRA:
            e["database"] = callee == "mysql"
        edges.append(e)

    for wf in WORKFLOWS:
        root = wf["root"]
        for st in wf["states"]:
            for t in st["transitions"]:
                if "service" in t:
                    add(root["service"], root["operation"], t["service"], t["operation"],
                        TRANSITION_LATENCY[t["operation"]], 1024)
                else:
                    sub = next(w for w in WORKFLOWS if w["name"] == t["sub_workflow"])
                    add(root["service"], root["operation"], sub["root"]["service"], sub["root"]["operation"],
                        TRANSITION_LATENCY[sub["root"]["operation"]], 1024)
    for (svc, op), calls in STATIC.items():
        for callee, cop, lat, payload in calls:
            add(svc, op, callee, cop, lat, payload)

    ops: dict[str, list[str]] = {}
    for e in edges:
        ops.setdefault(e["callee"], [])
        if e["operation"] not in ops[e["callee"]]:
            ops[e["callee"]].append(e["operation"])
    for wf in WORKFLOWS:
        ops.setdefault(wf["root"]["service"], [])
        if wf["root"]["operation"] not in ops[wf["root"]["service"]]:
            ops[wf["root"]["service"]].append(wf["root"]["operation"])
    for svc, extra in EXTRA_OPERATIONS.items():
        ops.setdefault(svc, []).extend(extra)

    services = []
    for name in APP:
        s = {"name": name, "pods": REPLICAS.get(name, 1), "operations": ops.get(name, [])}
        if name in SIDECARS:
            s["containers"] = ["main", "proxy"]
        services.append(s)
    for name in INFRA:
        services.append({"name": name, "pods": 1, "monitored": False, "operations": ops.get(name, [])})

    return {
        "name": "trainticket50",
        "entry_points": [UI],
        "services": services,
        "edges": edges,
        "workflows": WORKFLOWS,
    }


def main():
    out = Path(__file__).resolve().parents[1] / "src/rcabench/configs/trainticket50.yaml"
    header = "# Reference 50-service topology modeled on Train-Ticket. Generated by scripts/build_trainticket50.py.\n"
    body = yaml.safe_dump(build(), sort_keys=False, default_flow_style=None, width=120)
    out.write_text(header + body)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
